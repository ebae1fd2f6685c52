//! The twelve query categories on a generated ICU-style dataset, each checked
//! against a brute-force reading of the raw CSV files. The oracle only uses
//! the csv and chrono crates; every timestep rescans its stay's rows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use chrono::{NaiveDate, NaiveDateTime};
use tempoql::dataset::Dataset;
use tempoql::eval::{evaluate_text, StoreBindings};
use tempoql::series::Data;
use tempoql::synth::{generate_mimic, MimicConfig};
use tempoql::value::Value;

use crate::{root, Outcome, CATEGORY_BUDGET_SECS, CATEGORY_STAYS, FLOAT_RTOL};

const MINUTE: i64 = 60_000;
const HOUR: i64 = 60 * MINUTE;
const DAY: i64 = 24 * HOUR;
const YEAR_MS: f64 = 365.25 * DAY as f64;

const RESP_RATE: i64 = 220210;
const NIBP_MEAN: i64 = 220181;
const TEMP_F: i64 = 223761;
const O2_DEVICE: i64 = 226732;
const HEART_RHYTHM: i64 = 220048;
const VENTILATION: i64 = 225792;
const CARDIOVERSION: i64 = 225446;
const PLATELETS: i64 = 51265;
const LACTATE: i64 = 50813;

#[derive(Debug, Clone, PartialEq)]
enum V {
    Num(f64),
    Bool(bool),
    Text(String),
    Missing,
}

impl V {
    fn of(v: &Value) -> V {
        match v {
            Value::Number(x) => V::Num(*x),
            Value::Boolean(b) => V::Bool(*b),
            Value::Text(t) => V::Text(t.to_string()),
            Value::Missing => V::Missing,
            other => V::Text(other.render()),
        }
    }

    /// A raw cell as the loader would read it: blank is missing, plain
    /// decimal text is a number, anything else stays text.
    fn cell(s: &str) -> V {
        let s = s.trim();
        if s.is_empty() {
            return V::Missing;
        }
        let b = s.trim_start_matches('-').as_bytes();
        let padded = b.len() > 1 && b[0] == b'0' && b[1].is_ascii_digit();
        let plain = b.first().is_some_and(|c| c.is_ascii_digit() || *c == b'.')
            && b.iter().all(|c| c.is_ascii_digit() || b".eE+-".contains(c));
        match s.parse::<f64>() {
            Ok(x) if plain && !padded => V::Num(x),
            _ => V::Text(s.to_string()),
        }
    }

    fn num(&self) -> Option<f64> {
        match self {
            V::Num(x) => Some(*x),
            _ => None,
        }
    }

    fn close(&self, other: &V) -> bool {
        match (self, other) {
            (V::Num(a), V::Num(b)) => a == b || (a - b).abs() <= FLOAT_RTOL * a.abs().max(b.abs()),
            (a, b) => a == b,
        }
    }
}

type Row = (i64, Option<i64>, V);

fn time(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M:%S").ok().map(|t| t.and_utc().timestamp_millis())
}

struct Stay {
    id: i64,
    subject: i64,
    intime: i64,
    outtime: Option<i64>,
}

struct Chart {
    t: i64,
    item: i64,
    value: V,
}

struct Lab {
    t: i64,
    item: i64,
    valuenum: V,
}

struct Proc {
    start: i64,
    end: i64,
    item: i64,
}

/// Raw tables grouped by stay id; rows keep file order within a stay.
struct Raw {
    stays: Vec<Stay>,
    patients: HashMap<i64, (f64, i32)>,
    chart: HashMap<i64, Vec<Chart>>,
    lab: HashMap<i64, Vec<Lab>>,
    procs: HashMap<i64, Vec<Proc>>,
    dx: HashMap<i64, Vec<(i64, String)>>,
}

fn read(path: &Path) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

fn int(row: &HashMap<String, String>, k: &str) -> i64 {
    row[k].parse().unwrap_or_else(|_| panic!("{k}: {:?}", row[k]))
}

impl Raw {
    fn load(dir: &Path) -> Raw {
        let mut stays: Vec<Stay> = read(&dir.join("icu/icustays.csv"))
            .iter()
            .map(|r| Stay { id: int(r, "stay_id"), subject: int(r, "subject_id"), intime: time(&r["intime"]).unwrap(), outtime: time(&r["outtime"]) })
            .collect();
        stays.sort_by_key(|s| s.id);
        let hadm_to_stay: HashMap<i64, i64> =
            read(&dir.join("icu/icustays.csv")).iter().map(|r| (int(r, "hadm_id"), int(r, "stay_id"))).collect();
        let patients = read(&dir.join("hosp/patients.csv"))
            .iter()
            .map(|r| (int(r, "subject_id"), (r["anchor_age"].parse().unwrap(), r["anchor_year"].parse().unwrap())))
            .collect();
        let mut chart: HashMap<i64, Vec<Chart>> = HashMap::new();
        for r in read(&dir.join("icu/chartevents.csv")) {
            let Some(t) = time(&r["charttime"]) else { continue };
            chart.entry(int(&r, "stay_id")).or_default().push(Chart { t, item: int(&r, "itemid"), value: V::cell(&r["value"]) });
        }
        let mut lab: HashMap<i64, Vec<Lab>> = HashMap::new();
        for r in read(&dir.join("hosp/labevents.csv")) {
            let (Some(stay), Some(t)) = (hadm_to_stay.get(&int(&r, "hadm_id")), time(&r["charttime"])) else { continue };
            lab.entry(*stay).or_default().push(Lab { t, item: int(&r, "itemid"), valuenum: V::cell(&r["valuenum"]) });
        }
        let mut procs: HashMap<i64, Vec<Proc>> = HashMap::new();
        for r in read(&dir.join("icu/procedureevents.csv")) {
            let (Some(start), Some(end)) = (time(&r["starttime"]), time(&r["endtime"])) else { continue };
            if end < start {
                continue;
            }
            procs.entry(int(&r, "stay_id")).or_default().push(Proc { start, end, item: int(&r, "itemid") });
        }
        let mut dx: HashMap<i64, Vec<(i64, String)>> = HashMap::new();
        for r in read(&dir.join("hosp/diagnoses_icd.csv")) {
            dx.entry(int(&r, "stay_id")).or_default().push((time(&r["charttime"]).unwrap(), r["icd_code"].clone()));
        }
        Raw { stays, patients, chart, lab, procs, dx }
    }

    /// Chart rows of one item for a stay, ordered by (time, file order).
    fn chart_of(&self, stay: i64, item: i64) -> Vec<(i64, V)> {
        let mut rows: Vec<(i64, usize, V)> = self
            .chart
            .get(&stay)
            .into_iter()
            .flatten()
            .enumerate()
            .filter(|(_, c)| c.item == item)
            .map(|(k, c)| (c.t, k, c.value.clone()))
            .collect();
        rows.sort_by_key(|r| (r.0, r.1));
        rows.into_iter().map(|r| (r.0, r.2)).collect()
    }

    fn lab_of(&self, stay: i64, item: i64) -> Vec<(i64, V)> {
        let mut rows: Vec<(i64, usize, V)> = self
            .lab
            .get(&stay)
            .into_iter()
            .flatten()
            .enumerate()
            .filter(|(_, l)| l.item == item)
            .map(|(k, l)| (l.t, k, l.valuenum.clone()))
            .collect();
        rows.sort_by_key(|r| (r.0, r.1));
        rows.into_iter().map(|r| (r.0, r.2)).collect()
    }

    fn procs_of(&self, stay: i64, item: i64) -> Vec<(i64, i64)> {
        self.procs.get(&stay).into_iter().flatten().filter(|p| p.item == item).map(|p| (p.start, p.end)).collect()
    }

    /// Step times `intime + k * step` up to and including the discharge time.
    fn steps(&self, s: &Stay, step: i64) -> Vec<i64> {
        let Some(out) = s.outtime else { return Vec::new() };
        (0..).map(|k| s.intime + k * step).take_while(|t| *t <= out).collect()
    }
}

fn in_window(t: i64, lo: i64, hi: i64) -> bool {
    lo <= t && t < hi
}

fn mean(xs: &[f64]) -> V {
    if xs.is_empty() {
        V::Missing
    } else {
        V::Num(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// An interval [s, e) (or the point s when s == e) meets the window [lo, hi).
fn meets(s: i64, e: i64, lo: i64, hi: i64) -> bool {
    if s == e {
        in_window(s, lo, hi)
    } else {
        s.max(lo) < e.min(hi)
    }
}

fn expected(raw: &Raw, category: usize) -> Vec<Row> {
    let mut out = Vec::new();
    match category {
        1 => {
            for s in &raw.stays {
                let (age, year) = raw.patients[&s.subject];
                let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp_millis();
                out.push((s.id, None, V::Num((s.intime - jan1) as f64 / YEAR_MS + age)));
            }
        }
        2 => {
            for s in &raw.stays {
                out.extend(raw.chart_of(s.id, RESP_RATE).into_iter().map(|(t, v)| (s.id, Some(t), v)));
            }
        }
        3 => {
            let re = regex::Regex::new(r"(?i)\b(?:40[1-5]|I1[01235])").unwrap();
            for s in &raw.stays {
                let mut rows: Vec<&(i64, String)> = raw.dx.get(&s.id).into_iter().flatten().collect();
                rows.sort_by_key(|r| r.0);
                out.extend(rows.into_iter().map(|(t, code)| (s.id, Some(*t), V::Bool(re.is_match(code)))));
            }
        }
        4 => {
            for s in &raw.stays {
                for (t, v) in raw.lab_of(s.id, PLATELETS) {
                    let label = match v.num() {
                        None => V::Missing,
                        Some(x) if x < 130.0 => V::Text("Low".into()),
                        Some(x) if x < 400.0 => V::Text("Normal".into()),
                        Some(_) => V::Text("High".into()),
                    };
                    out.push((s.id, Some(t), label));
                }
            }
        }
        5 => {
            for s in &raw.stays {
                let xs: Vec<f64> = raw.chart_of(s.id, NIBP_MEAN).iter().filter_map(|r| r.1.num()).collect();
                out.push((s.id, None, xs.into_iter().reduce(f64::min).map_or(V::Missing, V::Num)));
            }
        }
        6 => {
            for s in &raw.stays {
                let labs = raw.lab_of(s.id, LACTATE);
                for t in raw.steps(s, DAY) {
                    let xs: Vec<f64> = labs.iter().filter(|r| in_window(r.0, t - DAY, t)).filter_map(|r| r.1.num()).collect();
                    out.push((s.id, Some(t), mean(&xs)));
                }
            }
        }
        7 => {
            for s in &raw.stays {
                let rows = raw.chart_of(s.id, NIBP_MEAN);
                for t in raw.steps(s, 4 * HOUR) {
                    let xs = rows.iter().filter(|r| in_window(r.0, t - 8 * HOUR, t)).filter_map(|r| r.1.num());
                    out.push((s.id, Some(t), xs.reduce(f64::min).map_or(V::Missing, V::Num)));
                }
            }
        }
        8 => {
            for s in &raw.stays {
                let vent = raw.procs_of(s.id, VENTILATION);
                let starts: BTreeSet<i64> = vent.iter().map(|p| p.0).collect();
                for t in starts {
                    let hit = vent.iter().any(|&(a, b)| meets(a, b, i64::MIN, t));
                    out.push((s.id, Some(t), V::Bool(hit)));
                }
            }
        }
        9 => {
            for s in &raw.stays {
                let shocks = raw.procs_of(s.id, CARDIOVERSION);
                let times: BTreeSet<i64> = raw.chart_of(s.id, HEART_RHYTHM).iter().map(|r| r.0).collect();
                for t in times {
                    let n = shocks.iter().filter(|&&(a, b)| meets(a, b, t, t + DAY)).count();
                    out.push((s.id, Some(t), V::Num(n as f64)));
                }
            }
        }
        10 => {
            for s in &raw.stays {
                let rows = raw.chart_of(s.id, TEMP_F);
                for (t, v) in &rows {
                    let xs: Vec<f64> = rows.iter().filter(|r| in_window(r.0, t - 8 * HOUR, *t)).filter_map(|r| r.1.num()).collect();
                    let d = match (v.num(), mean(&xs)) {
                        (Some(x), V::Num(m)) => V::Num(x - m),
                        _ => V::Missing,
                    };
                    out.push((s.id, Some(*t), d));
                }
            }
        }
        11 => {
            for s in &raw.stays {
                let rows = raw.chart_of(s.id, TEMP_F);
                for t in raw.steps(s, 4 * HOUR) {
                    let xs: Vec<f64> = rows.iter().filter(|r| in_window(r.0, t - 4 * HOUR, t)).filter_map(|r| r.1.num()).collect();
                    out.push((s.id, Some(t), mean(&xs)));
                }
            }
            let present: Vec<f64> = out.iter().filter_map(|r| r.2.num()).collect();
            let fill = mean(&present);
            for r in &mut out {
                if r.2 == V::Missing {
                    r.2 = fill.clone();
                }
            }
        }
        12 => {
            for s in &raw.stays {
                let rows = raw.chart_of(s.id, O2_DEVICE);
                let steps = raw.steps(s, DAY);
                let firsts: Vec<V> = steps
                    .iter()
                    .map(|t| rows.iter().find(|r| in_window(r.0, t - DAY, *t)).map_or(V::Missing, |r| r.1.clone()))
                    .collect();
                for (i, t) in steps.iter().enumerate() {
                    let mut v = firsts[i].clone();
                    if v == V::Missing {
                        // Latest earlier step within two days that had its own value.
                        if let Some(j) = (0..i).rev().find(|&j| firsts[j] != V::Missing && t - steps[j] <= 2 * DAY) {
                            v = firsts[j].clone();
                        }
                    }
                    out.push((s.id, Some(*t), v));
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

fn rows_of(d: &Data) -> Vec<Row> {
    let times = d.row_times();
    d.row_ids().iter().enumerate().map(|(i, id)| (*id, times.map(|t| t[i]), V::of(&d.values()[i]))).collect()
}

fn compare(got: &[Row], want: &[Row]) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} rows, oracle {}", got.len(), want.len()));
    }
    for (g, w) in got.iter().zip(want) {
        if g.0 != w.0 || g.1 != w.1 || !g.2.close(&w.2) {
            return Err(format!("row {g:?}, oracle {w:?}"));
        }
    }
    Ok(())
}

pub fn run() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    generate_mimic(dir.path(), &MimicConfig { stays: CATEGORY_STAYS, seed: 1207, ..MimicConfig::default() }).unwrap();
    let ds = Dataset::open(&dir.path().join("spec.json")).map_err(|e| e.to_string())?;
    let raw = Raw::load(dir.path());
    let mut files: Vec<_> = std::fs::read_dir(root().join("corpus/categories"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tql"))
        .collect();
    files.sort();
    let mut failures = Vec::new();
    let mut counts = BTreeMap::new();
    for (i, path) in files.iter().enumerate() {
        let name = path.file_stem().unwrap().to_string_lossy().to_string();
        let query = std::fs::read_to_string(path).unwrap();
        let want = expected(&raw, i + 1);
        let outcome = evaluate_text(&query, &ds, &StoreBindings::new())
            .map_err(|e| e.to_string())
            .and_then(|r| compare(&rows_of(&r.result), &want));
        // A vacuous category (no rows or only missing values) proves nothing.
        let informative = want.iter().any(|r| r.2 != V::Missing);
        match outcome {
            Ok(()) if informative => {
                counts.insert(name, want.len());
            }
            Ok(()) => failures.push(format!("{name}: oracle output is empty or all missing")),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let rows: usize = counts.values().sum();
    let detail = format!("{}/12 categories match on {CATEGORY_STAYS} stays ({rows} rows) in {secs:.1}s", counts.len());
    if files.len() != 12 {
        return Err(format!("expected 12 category queries, found {}", files.len()));
    }
    if !failures.is_empty() {
        return Err(format!("{detail}; {}", failures.join("; ")));
    }
    if secs >= CATEGORY_BUDGET_SECS {
        return Err(format!("{detail}; over the {CATEGORY_BUDGET_SECS}s budget"));
    }
    Ok(detail)
}
