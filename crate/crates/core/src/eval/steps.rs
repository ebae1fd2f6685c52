//! Timestep generation and the wiring of aggregation windows.

use super::aggregate::aggregate_windows;
use super::window::Window;
use super::{EvalError, EvalErrorKind, Evaluator};
use crate::lang::{unparse, AggFunc, Aggregation, Bounds, Expr, ExprKind, Marker, Span, Timestep};
use crate::series::{expand_onto, AttributeSeries, Data, EventRow, EventSeries, TimeSeries, TrajectoryId};
use crate::value::Value;

/// Upper bound on generated timesteps per query.
const MAX_TIMESTEPS: usize = 50_000_000;

impl Evaluator<'_> {
    pub(super) fn aggregation(&mut self, agg: &Aggregation, span: Span) -> Result<Data, EvalError> {
        let target = match self.eval(&agg.target)? {
            Data::TimeSeries(ts) => Data::Events(ts.to_events()),
            d @ (Data::Events(_) | Data::Intervals(_)) => d,
            other => {
                return Err(EvalError::new(
                    EvalErrorKind::Type,
                    format!("{} needs events or intervals to aggregate, found {}", agg.func.name(), other.kind().label()),
                    agg.target.span,
                ))
            }
        };
        if let (Some(mode), Data::Events(_)) = (agg.mode, &target) {
            return Err(EvalError::new(
                EvalErrorKind::Type,
                format!("interval mode '{}' applies only to intervals", mode.keyword()),
                span,
            ));
        }
        let name = format!("{} {}", agg.func.name(), series_name(&target));

        let (template, provenance) = match &agg.timestep {
            Some(ts) => {
                // Timestep bounds never see an enclosing aggregation's #now.
                let outer = self.now.take();
                let steps = self.timesteps(ts, span);
                self.now = outer;
                let (ids, times) = steps?;
                let values = times.iter().map(|t| Value::Timestamp(*t)).collect();
                let provenance = timestep_text(ts);
                (Data::TimeSeries(TimeSeries::new("#now", ids, times, values, provenance.clone())), Some(provenance))
            }
            None => (self.whole_trajectory_steps(), None),
        };
        let saved = self.now.replace(template.clone());
        let bounds = self.eval_bounds(agg.bounds.as_ref());
        self.now = saved;
        let bounds = bounds?
            .into_iter()
            .map(|b| match b {
                // An interval used as a time point stands for its start.
                Data::Intervals(s) => {
                    let rows = s.rows().map(|r| EventRow {
                        trajectory_id: r.trajectory_id,
                        time: r.start,
                        element_type: r.element_type,
                        value: Value::Timestamp(r.start),
                        order: r.order,
                    });
                    Data::Events(EventSeries::new(s.name(), rows.collect()))
                }
                other => other,
            })
            .collect::<Vec<_>>();

        // Without a timestep, event-valued bounds anchor one row per event.
        let (template, provenance) = match (&provenance, bounds.iter().find(|b| matches!(b, Data::Events(_) | Data::TimeSeries(_)))) {
            (None, Some(anchor)) => {
                let mut keys: Vec<(TrajectoryId, i64)> = anchor
                    .row_ids()
                    .iter()
                    .copied()
                    .zip(anchor.row_times().unwrap_or(&[]).iter().copied())
                    .collect();
                let n = keys.len();
                keys.dedup();
                if keys.len() < n {
                    self.diag(format!("{}: {} repeated anchor times collapsed into one row each", name, n - keys.len()));
                }
                let (ids, times): (Vec<_>, Vec<_>) = keys.into_iter().unzip();
                let values = times.iter().map(|t| Value::Timestamp(*t)).collect();
                let p = "anchored".to_string();
                (Data::TimeSeries(TimeSeries::new("anchor", ids, times, values, p.clone())), Some(p))
            }
            _ => (template, provenance),
        };

        let windows = self.windows(agg, &template, &bounds, span)?;
        let steps: Vec<(TrajectoryId, Option<Window>)> =
            template.row_ids().iter().copied().zip(windows).collect();
        let values = aggregate_windows(agg.func, agg.mode, &target, &steps).map_err(|e| EvalError::value(e, span))?;
        Ok(match (template, provenance) {
            (Data::TimeSeries(t), Some(p)) => {
                Data::TimeSeries(TimeSeries::new(name, t.ids().to_vec(), t.times().to_vec(), values, p))
            }
            (t, _) => {
                let pairs = t.row_ids().iter().copied().zip(values).collect();
                Data::Attributes(AttributeSeries::new(name, pairs).expect("unique trajectories"))
            }
        })
    }

    /// One synthetic step per trajectory, located at its latest observation.
    fn whole_trajectory_steps(&self) -> Data {
        self.bound_marker(Marker::MaxTime)
    }

    fn eval_bounds(&mut self, bounds: Option<&Bounds>) -> Result<Vec<Data>, EvalError> {
        Ok(match bounds {
            None => vec![],
            Some(Bounds::FromTo(a, b)) => vec![self.eval(a)?, self.eval(b)?],
            Some(Bounds::Before(a) | Bounds::After(a) | Bounds::At(a)) => vec![self.eval(a)?],
        })
    }

    fn windows(
        &mut self,
        agg: &Aggregation,
        template: &Data,
        bounds: &[Data],
        span: Span,
    ) -> Result<Vec<Option<Window>>, EvalError> {
        let exprs: Vec<&Expr> = match &agg.bounds {
            None => vec![],
            Some(Bounds::FromTo(a, b)) => vec![a, b],
            Some(Bounds::Before(a) | Bounds::After(a) | Bounds::At(a)) => vec![a],
        };
        let mut cols = Vec::new();
        for (d, e) in bounds.iter().zip(&exprs) {
            let vals = expand_onto(template, d).map_err(|err| EvalError::series(err, e.span))?;
            cols.push(timestamps(&vals, e.span)?);
        }
        let n = template.len();
        let out = match &agg.bounds {
            None => {
                let lo = timestamps(&self.marker_onto(template, Marker::MinTime, span)?, span)?;
                let hi = timestamps(&self.marker_onto(template, Marker::MaxTime, span)?, span)?;
                (0..n).map(|i| Some(Window::from_to_inclusive(lo[i]?, hi[i]?))).collect()
            }
            Some(Bounds::FromTo(_, b)) => {
                let inclusive = matches!(b.kind, ExprKind::Marker(Marker::MaxTime));
                (0..n)
                    .map(|i| {
                        let (s, e) = (cols[0][i]?, cols[1][i]?);
                        Some(if inclusive { Window::from_to_inclusive(s, e) } else { Window::from_to(s, e) })
                    })
                    .collect()
            }
            Some(Bounds::Before(_)) => cols[0].iter().map(|t| t.map(Window::before)).collect(),
            Some(Bounds::After(_)) => cols[0].iter().map(|t| t.map(Window::after)).collect(),
            Some(Bounds::At(_)) => cols[0].iter().map(|t| t.map(Window::at)).collect(),
        };
        Ok(out)
    }

    fn marker_onto(&self, template: &Data, m: Marker, span: Span) -> Result<Vec<Value>, EvalError> {
        expand_onto(template, &self.bound_marker(m)).map_err(|e| EvalError::series(e, span))
    }

    /// Per-trajectory timestep lists, flattened and sorted.
    fn timesteps(&mut self, ts: &Timestep, span: Span) -> Result<(Vec<TrajectoryId>, Vec<i64>), EvalError> {
        let universe = &self.ds.trajectories;
        let mut ids = Vec::new();
        let mut times = Vec::new();
        match ts {
            Timestep::Every { period, from, to } => {
                let p = match self.eval(period)? {
                    Data::Scalar(Value::Duration(p)) if p > 0 => p,
                    _ => {
                        return Err(EvalError::new(
                            EvalErrorKind::Invalid,
                            "timestep period must be a positive duration",
                            period.span,
                        ))
                    }
                };
                let template = Data::Attributes(
                    AttributeSeries::new("steps", universe.iter().map(|id| (*id, Value::Missing)).collect())
                        .expect("unique trajectories"),
                );
                let lo = self.range_bound(&template, from.as_ref(), Marker::MinTime, span)?;
                let hi = self.range_bound(&template, to.as_ref(), Marker::MaxTime, span)?;
                let (mut missing, mut reversed) = (0usize, 0usize);
                for (k, id) in universe.iter().enumerate() {
                    let (Some(a), Some(b)) = (lo[k], hi[k]) else {
                        missing += 1;
                        continue;
                    };
                    if a > b {
                        reversed += 1;
                        continue;
                    }
                    let count = ((b - a) / p) as usize + 1;
                    if ids.len() + count > MAX_TIMESTEPS {
                        return Err(EvalError::new(
                            EvalErrorKind::Invalid,
                            format!("timestep definition produces more than {MAX_TIMESTEPS} timesteps"),
                            span,
                        ));
                    }
                    for j in 0..count as i64 {
                        ids.push(*id);
                        times.push(a + j * p);
                    }
                }
                if missing > 0 {
                    self.diag(format!("{missing} trajectories have a missing timestep bound and contribute no timesteps"));
                }
                if reversed > 0 {
                    self.diag(format!("{reversed} trajectories have a timestep start after their end and contribute no timesteps"));
                }
            }
            Timestep::AtEvery { event, from, to } => {
                let d = self.eval(event)?;
                let d = match d {
                    Data::Events(_) | Data::TimeSeries(_) => d,
                    other => {
                        return Err(EvalError::new(
                            EvalErrorKind::Type,
                            format!("'at every' needs events, found {} (use start() or end() for intervals)", other.kind().label()),
                            event.span,
                        ))
                    }
                };
                let lo = from.as_ref().map(|f| self.range_bound(&d, Some(f), Marker::MinTime, span)).transpose()?;
                let hi = to.as_ref().map(|t| self.range_bound(&d, Some(t), Marker::MaxTime, span)).transpose()?;
                let row_times = d.row_times().unwrap_or(&[]);
                let mut outside = 0usize;
                for (k, (&id, &t)) in d.row_ids().iter().zip(row_times).enumerate() {
                    let ok_lo = lo.as_ref().is_none_or(|l| l[k].is_some_and(|a| t >= a));
                    let ok_hi = hi.as_ref().is_none_or(|h| h[k].is_some_and(|b| t <= b));
                    if !(ok_lo && ok_hi) {
                        outside += 1;
                        continue;
                    }
                    if ids.last() == Some(&id) && times.last() == Some(&t) {
                        continue;
                    }
                    ids.push(id);
                    times.push(t);
                }
                let collapsed = d.len() - outside - ids.len();
                if collapsed > 0 {
                    self.diag(format!("{collapsed} events share a time with an earlier event; one timestep kept per time"));
                }
            }
            Timestep::AtList(list) => {
                let mut ts: Vec<i64> = list.iter().map(|(_, t)| *t).collect();
                ts.sort_unstable();
                ts.dedup();
                for id in universe {
                    ids.extend(std::iter::repeat_n(*id, ts.len()));
                    times.extend_from_slice(&ts);
                }
            }
        }
        Ok((ids, times))
    }

    fn range_bound(
        &mut self,
        template: &Data,
        expr: Option<&Expr>,
        default: Marker,
        span: Span,
    ) -> Result<Vec<Option<i64>>, EvalError> {
        match expr {
            None => timestamps(&self.marker_onto(template, default, span)?, span),
            Some(e) => {
                let d = self.eval(e)?;
                let vals = expand_onto(template, &d).map_err(|err| EvalError::series(err, e.span))?;
                timestamps(&vals, e.span)
            }
        }
    }
}

fn timestamps(vals: &[Value], span: Span) -> Result<Vec<Option<i64>>, EvalError> {
    vals.iter()
        .map(|v| match v {
            Value::Timestamp(t) => Ok(Some(*t)),
            Value::Missing => Ok(None),
            other => Err(EvalError::new(
                EvalErrorKind::Type,
                format!("time bound must be a timestamp, found {}", other.variant_name()),
                span,
            )),
        })
        .collect()
}

fn series_name(d: &Data) -> String {
    match d {
        Data::Events(e) => e.name().to_string(),
        Data::Intervals(i) => i.name().to_string(),
        Data::TimeSeries(t) => t.name().to_string(),
        Data::Attributes(a) => a.name().to_string(),
        Data::Scalar(v) => v.render(),
    }
}

/// Canonical text of a timestep definition, used as time-series provenance.
fn timestep_text(ts: &Timestep) -> String {
    let dummy = Aggregation {
        func: AggFunc::Count,
        mode: None,
        target: Expr::new(ExprKind::Variable("x".into()), Span::default()),
        bounds: None,
        timestep: Some(ts.clone()),
    };
    let text = unparse(&Expr::new(ExprKind::Aggregation(Box::new(dummy)), Span::default()));
    text.trim_start_matches("count x ").to_string()
}
