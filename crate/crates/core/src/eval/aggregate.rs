//! Windowed aggregation of events and intervals.

use std::collections::HashSet;

use rayon::prelude::*;

use super::window::Window;
use crate::lang::{AggFunc, IntervalMode};
use crate::series::{trajectory_ranges, Data, EventSeries, IntervalSeries, TrajectoryId};
use crate::value::{Value, ValueError, MS_PER_HOUR};

/// Aggregates `target` once per step. `steps` are sorted by trajectory; a
/// `None` window (a bound evaluated to missing) yields missing.
pub fn aggregate_windows(
    func: AggFunc,
    mode: Option<IntervalMode>,
    target: &Data,
    steps: &[(TrajectoryId, Option<Window>)],
) -> Result<Vec<Value>, ValueError> {
    let step_ids: Vec<TrajectoryId> = steps.iter().map(|s| s.0).collect();
    let groups = trajectory_ranges(&step_ids);
    let target_groups = trajectory_ranges(target.row_ids());
    let chunks: Vec<Vec<Value>> = groups
        .par_iter()
        .map(|(id, range)| {
            let rows = target_groups
                .binary_search_by_key(id, |g| g.0)
                .map_or(0..0, |k| target_groups[k].1.clone());
            steps[range.clone()]
                .iter()
                .map(|(_, w)| match w {
                    None => Ok(Value::Missing),
                    Some(w) => match target {
                        Data::Events(e) => reduce_events(func, e, rows.clone(), w),
                        Data::Intervals(s) => reduce_intervals(func, mode.unwrap_or(IntervalMode::Value), s, rows.clone(), w),
                        _ => unreachable!("aggregation target checked by the caller"),
                    },
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn reduce_events(func: AggFunc, e: &EventSeries, rows: std::ops::Range<usize>, w: &Window) -> Result<Value, ValueError> {
    let times = &e.times()[rows.clone()];
    let hit = w.slice(times);
    let vals = &e.values()[rows.start + hit.start..rows.start + hit.end];
    if func == AggFunc::Integral {
        return trapezoid(&times[hit], vals);
    }
    reduce(func, vals)
}

fn reduce_intervals(
    func: AggFunc,
    mode: IntervalMode,
    s: &IntervalSeries,
    rows: std::ops::Range<usize>,
    w: &Window,
) -> Result<Value, ValueError> {
    // Integrating a value over time is the rate contribution.
    let mode = if func == AggFunc::Integral && mode == IntervalMode::Value { IntervalMode::Rate } else { mode };
    let starts = &s.starts()[rows.clone()];
    // Intervals starting after the window cannot touch it.
    let upto = starts.partition_point(|&t| t <= w.hi);
    let mut contrib = Vec::new();
    for k in rows.start..rows.start + upto {
        let (start, end) = (s.starts()[k], s.ends()[k]);
        let (shared, overlap) = w.overlap(start, end);
        if !shared {
            continue;
        }
        contrib.push(contribution(mode, &s.values()[k], start, end, overlap)?);
    }
    if func == AggFunc::Integral {
        return reduce(AggFunc::Sum, &contrib);
    }
    reduce(func, &contrib)
}

/// Per-interval value under an interval mode.
pub fn contribution(mode: IntervalMode, v: &Value, start: i64, end: i64, overlap: i64) -> Result<Value, ValueError> {
    Ok(match mode {
        IntervalMode::Value => v.clone(),
        IntervalMode::Duration => Value::Duration(overlap),
        IntervalMode::Rate => match v {
            Value::Missing => Value::Missing,
            Value::Number(n) => Value::Number(n * overlap as f64 / MS_PER_HOUR as f64),
            other => return Err(expected("rate", "number", other)),
        },
        IntervalMode::Amount => match v {
            Value::Missing => Value::Missing,
            Value::Number(n) if start == end => Value::Number(*n),
            Value::Number(n) => Value::Number(n * (overlap as f64 / (end - start) as f64)),
            other => return Err(expected("amount", "number", other)),
        },
    })
}

fn expected(op: &str, what: &'static str, found: &Value) -> ValueError {
    ValueError::Expected { op: op.to_string(), expected: what, found: found.variant_name() }
}

/// Trapezoidal integral of (time, value) pairs with time in hours. Missing
/// values are skipped; no values gives missing.
pub fn trapezoid(times: &[i64], vals: &[Value]) -> Result<Value, ValueError> {
    let mut prev: Option<(i64, f64)> = None;
    let mut total = 0.0;
    for (t, v) in times.iter().zip(vals) {
        let x = match v {
            Value::Missing => continue,
            Value::Number(n) => *n,
            other => return Err(expected("integral", "number", other)),
        };
        if let Some((pt, px)) = prev {
            total += (t - pt) as f64 / MS_PER_HOUR as f64 * (px + x) / 2.0;
        }
        prev = Some((*t, x));
    }
    Ok(if prev.is_some() { Value::Number(total) } else { Value::Missing })
}

/// Applies an aggregation function to the values in a window, in time order.
pub fn reduce(func: AggFunc, vals: &[Value]) -> Result<Value, ValueError> {
    use AggFunc::*;
    let nonnull = || vals.iter().filter(|v| !v.is_missing());
    Ok(match func {
        Count => Value::Number(vals.len() as f64),
        CountNonnull => Value::Number(nonnull().count() as f64),
        CountDistinct | CountDistinctNonnull => {
            let set: HashSet<_> = vals
                .iter()
                .filter(|v| func == CountDistinct || !v.is_missing())
                .map(Value::distinct_key)
                .collect();
            Value::Number(set.len() as f64)
        }
        Exists => Value::Boolean(!vals.is_empty()),
        ExistsNonnull => Value::Boolean(nonnull().next().is_some()),
        AllNonnull => Value::Boolean(vals.iter().all(|v| !v.is_missing())),
        Any | All => {
            let mut acc = func == All;
            for v in nonnull() {
                let b = v.as_bool().ok_or_else(|| expected(func.name(), "boolean", v))?;
                if func == Any { acc |= b } else { acc &= b }
            }
            Value::Boolean(acc)
        }
        First => vals.first().cloned().unwrap_or_default(),
        Last => vals.last().cloned().unwrap_or_default(),
        Sum | Mean | Median | Min | Max | Integral => numeric(func, vals)?,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Number,
    Duration,
    Timestamp,
}

fn numeric(func: AggFunc, vals: &[Value]) -> Result<Value, ValueError> {
    let mut kind = None;
    let mut xs = Vec::with_capacity(vals.len());
    for v in vals {
        let (k, x) = match v {
            Value::Missing => continue,
            Value::Number(n) => (Kind::Number, *n),
            Value::Duration(d) => (Kind::Duration, *d as f64),
            Value::Timestamp(t) if matches!(func, AggFunc::Min | AggFunc::Max) => (Kind::Timestamp, *t as f64),
            other => return Err(expected(func.name(), "numbers or durations", other)),
        };
        match kind {
            None => kind = Some(k),
            Some(prev) if prev != k => return Err(expected(func.name(), "values of one type", v)),
            _ => {}
        }
        xs.push(x);
    }
    let Some(kind) = kind else { return Ok(Value::Missing) };
    let x = match func {
        AggFunc::Sum | AggFunc::Integral => xs.iter().sum::<f64>(),
        AggFunc::Mean => xs.iter().sum::<f64>() / xs.len() as f64,
        AggFunc::Median => {
            xs.sort_by(f64::total_cmp);
            let m = xs.len() / 2;
            if xs.len() % 2 == 1 { xs[m] } else { (xs[m - 1] + xs[m]) / 2.0 }
        }
        AggFunc::Min => xs.iter().copied().fold(f64::INFINITY, f64::min),
        AggFunc::Max => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        _ => unreachable!(),
    };
    Ok(match kind {
        Kind::Number => Value::Number(x),
        Kind::Duration => Value::Duration(x.round() as i64),
        Kind::Timestamp => Value::Timestamp(x as i64),
    })
}
