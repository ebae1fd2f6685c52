//! `where`, `impute`, `carry` and `cut`.

use super::{EvalError, EvalErrorKind, Evaluator};
use crate::lang::{ClauseKind, Expr, ImputeStrategy, Span};
use crate::series::{expand_onto, trajectory_ranges, Data, TrajectoryId};
use crate::value::Value;

impl Evaluator<'_> {
    pub(super) fn clause(&mut self, target: &Expr, clause: &ClauseKind, span: Span) -> Result<Data, EvalError> {
        let data = self.eval(target)?;
        match clause {
            ClauseKind::Where(pred) => {
                let p = self.with_value(&data, |ev| ev.eval(pred))?;
                let mask = expand_onto(&data, &p).map_err(|e| EvalError::series(e, pred.span))?;
                let mut keep = Vec::with_capacity(mask.len());
                for v in &mask {
                    keep.push(match v {
                        Value::Boolean(b) => *b,
                        Value::Missing => false,
                        other => {
                            return Err(EvalError::new(
                                EvalErrorKind::Type,
                                format!("where predicate must be boolean, found {}", other.variant_name()),
                                pred.span,
                            ))
                        }
                    });
                }
                Ok(filter(&data, &keep))
            }
            ClauseKind::Impute(strategy) => {
                let fill = match strategy {
                    ImputeStrategy::Mean | ImputeStrategy::Median => {
                        let stat = population_stat(matches!(strategy, ImputeStrategy::Median), data.values())
                            .map_err(|msg| EvalError::new(EvalErrorKind::Type, msg, span))?;
                        if stat.is_missing() {
                            self.diag("impute: no non-missing values to compute a statistic from");
                        }
                        vec![stat; data.len()]
                    }
                    ImputeStrategy::Expr(e) => {
                        let d = self.with_value(&data, |ev| ev.eval(e))?;
                        expand_onto(&data, &d).map_err(|err| EvalError::series(err, e.span))?
                    }
                };
                let values = data
                    .values()
                    .iter()
                    .zip(fill)
                    .map(|(v, f)| if v.is_missing() { f } else { v.clone() })
                    .collect();
                Ok(data.with_values(values))
            }
            ClauseKind::Carry(h) => {
                let horizon = match self.eval(h)? {
                    Data::Scalar(Value::Duration(d)) if d >= 0 => d,
                    _ => {
                        return Err(EvalError::new(
                            EvalErrorKind::Invalid,
                            "carry needs a non-negative duration",
                            h.span,
                        ))
                    }
                };
                match (data.row_times(), &data) {
                    (Some(times), Data::Events(_) | Data::TimeSeries(_)) => {
                        let values = carry_forward(data.row_ids(), times, data.values(), horizon);
                        Ok(data.with_values(values))
                    }
                    _ => {
                        self.diag(format!("carry has no effect on {} data", data.kind().label()));
                        Ok(data)
                    }
                }
            }
            ClauseKind::Cut { edges, labels } => {
                let values = cut_values(data.values(), edges, labels).map_err(|msg| EvalError::new(EvalErrorKind::Type, msg, span))?;
                let outside = values
                    .iter()
                    .zip(data.values())
                    .filter(|(o, i)| o.is_missing() && !i.is_missing())
                    .count();
                if outside > 0 {
                    self.diag(format!("cut: {outside} values fall outside the bin edges and became missing"));
                }
                Ok(data.with_values(values))
            }
        }
    }

    fn with_value<T>(&mut self, data: &Data, f: impl FnOnce(&mut Self) -> Result<T, EvalError>) -> Result<T, EvalError> {
        let saved = self.value.replace(data.clone());
        let out = f(self);
        self.value = saved;
        out
    }
}

/// Keeps rows whose mask is true; attributes and scalars keep their shape
/// and get missing instead.
fn filter(data: &Data, keep: &[bool]) -> Data {
    match data {
        Data::Events(e) => Data::Events(e.filter(keep)),
        Data::Intervals(s) => Data::Intervals(s.filter(keep)),
        Data::TimeSeries(t) => Data::TimeSeries(t.filter(keep)),
        Data::Attributes(_) | Data::Scalar(_) => data.with_values(
            data.values().iter().zip(keep).map(|(v, k)| if *k { v.clone() } else { Value::Missing }).collect(),
        ),
    }
}

/// Population mean or median over all non-missing values.
fn population_stat(median: bool, values: &[Value]) -> Result<Value, String> {
    let mut xs = Vec::new();
    let mut duration = None;
    for v in values {
        match v {
            Value::Missing => {}
            Value::Number(n) if duration != Some(true) => {
                duration = Some(false);
                xs.push(*n);
            }
            Value::Duration(d) if duration != Some(false) => {
                duration = Some(true);
                xs.push(*d as f64);
            }
            other => {
                return Err(format!(
                    "impute {} needs numeric values, found {}",
                    if median { "median" } else { "mean" },
                    other.variant_name()
                ))
            }
        }
    }
    if xs.is_empty() {
        return Ok(Value::Missing);
    }
    let x = if median {
        xs.sort_by(f64::total_cmp);
        let m = xs.len() / 2;
        if xs.len() % 2 == 1 { xs[m] } else { (xs[m - 1] + xs[m]) / 2.0 }
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    Ok(if duration == Some(true) { Value::Duration(x.round() as i64) } else { Value::Number(x) })
}

/// Fills missing values from the most recent earlier non-missing value of the
/// same trajectory when it lies within `horizon` (measured from the original
/// observation). Rows must be sorted by (trajectory, time).
pub fn carry_forward(ids: &[TrajectoryId], times: &[i64], values: &[Value], horizon: i64) -> Vec<Value> {
    let mut out = values.to_vec();
    for (_, range) in trajectory_ranges(ids) {
        let mut last: Option<(i64, &Value)> = None;
        for i in range {
            if !values[i].is_missing() {
                last = Some((times[i], &values[i]));
            } else if let Some((t0, v)) = last {
                let gap = times[i] - t0;
                if gap > 0 && gap <= horizon {
                    out[i] = v.clone();
                }
            }
        }
    }
    out
}

/// Labels each numeric value with bin `i` where `edges[i] <= v < edges[i+1]`.
pub fn cut_values(values: &[Value], edges: &[f64], labels: &[String]) -> Result<Vec<Value>, String> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err("cut bin edges must be strictly increasing".into());
    }
    if labels.len() + 1 != edges.len() {
        return Err(format!("{} bin edges need {} labels, found {}", edges.len(), edges.len() - 1, labels.len()));
    }
    let labels: Vec<Value> = labels.iter().map(Value::text).collect();
    values
        .iter()
        .map(|v| match v {
            Value::Missing => Ok(Value::Missing),
            Value::Number(x) => {
                let i = edges.partition_point(|e| e <= x);
                Ok(if i == 0 || i == edges.len() { Value::Missing } else { labels[i - 1].clone() })
            }
            other => Err(format!("cut needs numbers, found {}", other.variant_name())),
        })
        .collect()
}
