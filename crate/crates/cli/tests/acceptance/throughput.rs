use std::time::Instant;

use tempoql::dataset::{Dataset, TableKind};
use tempoql::eval::{evaluate_text, StoreBindings};
use tempoql::synth::{generate_mimic, MimicConfig};

use crate::{Outcome, PEAK_MEMORY_CEILING_BYTES, SCALING_SLOPE_CEILING, THROUGHPUT_BUDGET_SECS};

const SIZES: [usize; 4] = [1_000, 5_000, 10_000, 50_000];
const EVENTS_PER_STAY: usize = 100;
const QUERY: &str = "mean {Heart Rate; scope = chartevents} from #now - 4 h to #now every 1 h";

/// Peak resident set size of this process, from /proc.
fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Least-squares slope of log(seconds) against log(size).
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub fn run() -> Outcome {
    let mut points = Vec::new();
    let mut report = Vec::new();
    let mut largest = (0usize, 0f64, 0f64, 0usize);
    for n in SIZES {
        let dir = tempfile::tempdir().unwrap();
        generate_mimic(dir.path(), &MimicConfig { stays: n, seed: 31, chart_events_per_stay: EVENTS_PER_STAY, chart_only: true })
            .unwrap();
        let t = Instant::now();
        let ds = Dataset::open(&dir.path().join("spec.json")).map_err(|e| e.to_string())?;
        let load = t.elapsed().as_secs_f64();
        let events: usize = ds.tables.iter().filter(|t| t.kind() == TableKind::Event).map(|t| t.len()).sum();
        let t = Instant::now();
        let r = evaluate_text(QUERY, &ds, &StoreBindings::new()).map_err(|e| e.to_string())?;
        let query = t.elapsed().as_secs_f64();
        report.push(format!("{n}: {query:.2}s"));
        points.push((n as f64, query));
        largest = (n, load, query, events);
        assert!(!r.result.is_empty());
    }
    let slope = log_log_slope(&points);
    let peak = peak_rss_bytes().ok_or("cannot read VmHWM")?;
    let (n, load, query, events) = largest;
    let detail = format!(
        "{n} stays / {events} events: load {load:.1}s + query {query:.1}s (budget {THROUGHPUT_BUDGET_SECS}s), \
         peak RSS {:.2} GiB, log-log slope {slope:.2} [{}]",
        peak as f64 / (1u64 << 30) as f64,
        report.join(", ")
    );
    if load + query < THROUGHPUT_BUDGET_SECS && peak < PEAK_MEMORY_CEILING_BYTES && slope < SCALING_SLOPE_CEILING {
        Ok(detail)
    } else {
        Err(detail)
    }
}
