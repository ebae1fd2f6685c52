//! Summaries of evaluated series for the results sidebar.

use std::collections::HashMap;

use serde::Serialize;

use crate::eval::QueryResult;
use crate::lang::{Span, SubqueryKind};
use crate::series::{trajectory_ranges, Data, DataKind};
use crate::value::Value;

pub const HISTOGRAM_BINS: usize = 20;
pub const TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesProfile {
    pub kind: DataKind,
    pub row_count: usize,
    pub trajectory_count: usize,
    pub rows_per_trajectory: Option<RowsPerTrajectory>,
    pub missing_fraction: f64,
    pub value_summary: Option<ValueSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowsPerTrajectory {
    pub min: usize,
    pub median: f64,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ValueSummary {
    Numeric {
        min: f64,
        q1: f64,
        median: f64,
        q3: f64,
        max: f64,
        mean: f64,
        histogram: Vec<HistogramBin>,
    },
    Categorical {
        top: Vec<CategoryCount>,
        other_count: usize,
    },
    Timestamp {
        min: i64,
        max: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryCount {
    pub value: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubqueryProfile {
    pub span: Span,
    pub kind: SubqueryKind,
    pub label: String,
    pub plan: Option<String>,
    pub profile: SeriesProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileBundle {
    pub result: SeriesProfile,
    pub subqueries: Vec<SubqueryProfile>,
}

pub fn profile(data: &Data) -> SeriesProfile {
    let values = data.values();
    let row_count = values.len();
    let missing = values.iter().filter(|v| v.is_missing()).count();
    let (trajectory_count, rows_per_trajectory) = match data {
        Data::Scalar(_) => (0, None),
        _ => {
            let mut counts: Vec<usize> = trajectory_ranges(data.row_ids()).into_iter().map(|(_, r)| r.len()).collect();
            counts.sort_unstable();
            let rpt = (!counts.is_empty()).then(|| {
                let xs: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
                RowsPerTrajectory { min: counts[0], median: quantile(&xs, 0.5), max: counts[counts.len() - 1] }
            });
            (counts.len(), rpt)
        }
    };
    SeriesProfile {
        kind: data.kind(),
        row_count,
        trajectory_count,
        rows_per_trajectory,
        missing_fraction: if row_count == 0 { 0.0 } else { missing as f64 / row_count as f64 },
        value_summary: summarize(values),
    }
}

pub fn profile_result(qr: &QueryResult) -> ProfileBundle {
    ProfileBundle {
        result: profile(&qr.result),
        subqueries: qr
            .subqueries
            .iter()
            .map(|c| SubqueryProfile {
                span: c.span,
                kind: c.kind,
                label: c.label.clone(),
                plan: c.plan.clone(),
                profile: profile(&c.data),
            })
            .collect(),
    }
}

fn summarize(values: &[Value]) -> Option<ValueSummary> {
    let present: Vec<&Value> = values.iter().filter(|v| !v.is_missing()).collect();
    if present.is_empty() {
        return None;
    }
    if present.iter().all(|v| matches!(v, Value::Number(_))) {
        let mut xs: Vec<f64> = present.iter().map(|v| if let Value::Number(x) = v { *x } else { 0.0 }).collect();
        xs.sort_by(f64::total_cmp);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        return Some(ValueSummary::Numeric {
            min: xs[0],
            q1: quantile(&xs, 0.25),
            median: quantile(&xs, 0.5),
            q3: quantile(&xs, 0.75),
            max: xs[xs.len() - 1],
            mean,
            histogram: histogram(&xs),
        });
    }
    if present.iter().all(|v| matches!(v, Value::Timestamp(_))) {
        let ts = present.iter().filter_map(|v| if let Value::Timestamp(t) = v { Some(*t) } else { None });
        let (lo, hi) = ts.fold((i64::MAX, i64::MIN), |(a, b), t| (a.min(t), b.max(t)));
        return Some(ValueSummary::Timestamp { min: lo, max: hi });
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for v in &present {
        *counts.entry(v.render()).or_default() += 1;
    }
    let mut all: Vec<(String, usize)> = counts.into_iter().collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let other_count = all.iter().skip(TOP_K).map(|c| c.1).sum();
    let top = all.into_iter().take(TOP_K).map(|(value, count)| CategoryCount { value, count }).collect();
    Some(ValueSummary::Categorical { top, other_count })
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    } else {
        sorted[i]
    }
}

fn histogram(sorted: &[f64]) -> Vec<HistogramBin> {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return vec![HistogramBin { lo, hi, count: sorted.len() }];
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|i| HistogramBin {
            lo: lo + width * i as f64,
            hi: if i + 1 == HISTOGRAM_BINS { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
        })
        .collect();
    for x in sorted {
        let i = (((x - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[i].count += 1;
    }
    bins
}
