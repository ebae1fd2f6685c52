//! Builtin functions.

use super::{common_shape, scalar_op, EvalError, EvalErrorKind, Evaluator};
use crate::lang::{regex_subset, Expr, ExprKind, Span};
use crate::series::{expand_onto, trajectory_ranges, Data, EventRow, EventSeries, IntervalRow, IntervalSeries};
use crate::value::{BinaryOp, Value};

fn err(kind: EvalErrorKind, msg: impl Into<String>, span: Span) -> EvalError {
    EvalError::new(kind, msg, span)
}

fn arity(name: &str, args: &[Expr], lo: usize, hi: usize, span: Span) -> Result<(), EvalError> {
    if args.len() < lo || args.len() > hi {
        let want = if lo == hi { lo.to_string() } else if hi == usize::MAX { format!("at least {lo}") } else { format!("{lo} to {hi}") };
        return Err(err(EvalErrorKind::Invalid, format!("{name}() takes {want} arguments, got {}", args.len()), span));
    }
    Ok(())
}

fn events_of(name: &str, d: Data, span: Span) -> Result<EventSeries, EvalError> {
    match d {
        Data::Events(e) => Ok(e),
        Data::TimeSeries(t) => Ok(t.to_events()),
        other => Err(err(EvalErrorKind::Type, format!("{name}() needs events, found {}", other.kind().label()), span)),
    }
}

fn intervals_of(name: &str, d: Data, span: Span) -> Result<IntervalSeries, EvalError> {
    match d {
        Data::Intervals(s) => Ok(s),
        other => Err(err(EvalErrorKind::Type, format!("{name}() needs intervals, found {}", other.kind().label()), span)),
    }
}

impl Evaluator<'_> {
    pub(super) fn call(&mut self, name: &str, args: &[Expr], span: Span) -> Result<Data, EvalError> {
        let lname = name.to_ascii_lowercase();
        match lname.as_str() {
            "time" => {
                arity(name, args, 1, 1, span)?;
                let e = events_of(name, self.eval(&args[0])?, args[0].span)?;
                let values = e.times().iter().map(|t| Value::Timestamp(*t)).collect();
                Ok(Data::Events(e.with_values(values)))
            }
            "type" => {
                arity(name, args, 1, 1, span)?;
                match self.eval(&args[0])? {
                    Data::Events(e) => {
                        let values = e.types().iter().map(|t| Value::Text(t.clone())).collect();
                        Ok(Data::Events(e.with_values(values)))
                    }
                    Data::Intervals(s) => {
                        let values = s.types().iter().map(|t| Value::Text(t.clone())).collect();
                        Ok(Data::Intervals(s.with_values(values)))
                    }
                    other => Err(err(
                        EvalErrorKind::Type,
                        format!("type() needs events or intervals, found {}", other.kind().label()),
                        args[0].span,
                    )),
                }
            }
            "start" | "end" | "starttime" | "endtime" | "duration" => {
                arity(name, args, 1, 1, span)?;
                let s = intervals_of(name, self.eval(&args[0])?, args[0].span)?;
                let rows = s
                    .rows()
                    .map(|r| {
                        let (time, value) = match lname.as_str() {
                            "start" => (r.start, r.value),
                            "end" => (r.end, r.value),
                            "starttime" => (r.start, Value::Timestamp(r.start)),
                            "endtime" => (r.start, Value::Timestamp(r.end)),
                            _ => (r.start, Value::Duration(r.end - r.start)),
                        };
                        EventRow { trajectory_id: r.trajectory_id, time, element_type: r.element_type, value, order: r.order }
                    })
                    .collect();
                Ok(Data::Events(EventSeries::new(s.name(), rows)))
            }
            "intervals" => {
                arity(name, args, 2, 2, span)?;
                let a = events_of(name, self.eval(&args[0])?, args[0].span)?;
                let b = events_of(name, self.eval(&args[1])?, args[1].span)?;
                let (rows, unmatched) = pair_intervals(&a, &b);
                if unmatched > 0 {
                    self.diag(format!("intervals(): {unmatched} start events had no later end event and were dropped"));
                }
                Ok(Data::Intervals(IntervalSeries::new(a.name(), rows).0))
            }
            "union" => {
                arity(name, args, 1, usize::MAX, span)?;
                let parts = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                union(parts, span)
            }
            "assign" => {
                arity(name, args, 2, 2, span)?;
                let target = self.eval(&args[0])?;
                let v = self.eval(&args[1])?;
                let values = expand_onto(&target, &v).map_err(|e| EvalError::series(e, args[1].span))?;
                Ok(target.with_values(values))
            }
            "extract" => {
                arity(name, args, 2, 3, span)?;
                let d = self.eval(&args[0])?;
                let (pattern, ci) = match &args[1].kind {
                    ExprKind::Regex(r) => (r.pattern.clone(), r.case_insensitive),
                    ExprKind::Literal(Value::Text(t)) => (t.to_string(), false),
                    _ => return Err(err(EvalErrorKind::Type, "extract() needs a regex pattern", args[1].span)),
                };
                let re = regex_subset::compile(&pattern, ci).map_err(|(m, _)| err(EvalErrorKind::Invalid, m, args[1].span))?;
                let group = match args.get(2) {
                    None => 1,
                    Some(a) => match self.eval(a)? {
                        Data::Scalar(Value::Number(n)) if n >= 0.0 && n.fract() == 0.0 => n as usize,
                        _ => return Err(err(EvalErrorKind::Type, "extract() group index must be a non-negative integer", a.span)),
                    },
                };
                if group >= re.captures_len() {
                    return Err(err(EvalErrorKind::Invalid, format!("pattern has no capture group {group}"), args[1].span));
                }
                let values = d
                    .values()
                    .iter()
                    .map(|v| {
                        if v.is_missing() {
                            return Value::Missing;
                        }
                        let s = match v {
                            Value::Text(t) => t.to_string(),
                            other => other.render(),
                        };
                        re.captures(&s)
                            .and_then(|c| c.get(group))
                            .map_or(Value::Missing, |m| Value::text(m.as_str()))
                    })
                    .collect();
                Ok(d.with_values(values))
            }
            "abs" => {
                arity(name, args, 1, 1, span)?;
                let d = self.eval(&args[0])?;
                d.map_values(|v| {
                    Ok(match v {
                        Value::Number(n) => Value::Number(n.abs()),
                        Value::Duration(x) => Value::Duration(x.abs()),
                        Value::Missing => Value::Missing,
                        other => {
                            return Err(crate::value::ValueError::Expected {
                                op: "abs".into(),
                                expected: "number or duration",
                                found: other.variant_name(),
                            })
                        }
                    })
                })
                .map_err(|e| EvalError::value(e, span))
            }
            "max" | "min" => {
                arity(name, args, 2, usize::MAX, span)?;
                let parts = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                let template = common_shape(&parts).map_err(|e| EvalError::series(e, span))?;
                let cols = parts
                    .iter()
                    .map(|p| expand_onto(&template, p))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| EvalError::series(e, span))?;
                let better = if lname == "max" { BinaryOp::Gt } else { BinaryOp::Lt };
                let mut out = cols[0].clone();
                for col in &cols[1..] {
                    for (o, v) in out.iter_mut().zip(col) {
                        if o.is_missing() || v.is_missing() {
                            *o = Value::Missing;
                        } else if scalar_op(better, v, o, span)? == Value::Boolean(true) {
                            *o = v.clone();
                        }
                    }
                }
                Ok(template.with_values(out))
            }
            _ => Err(err(EvalErrorKind::UnresolvedName, format!("unknown function '{name}'"), span)),
        }
    }
}

/// Pairs each start event with the first unused end event at or after it,
/// per trajectory. Returns the intervals and the number of unmatched starts.
pub(crate) fn pair_intervals(a: &EventSeries, b: &EventSeries) -> (Vec<IntervalRow>, usize) {
    let b_groups = trajectory_ranges(b.ids());
    let mut rows = Vec::new();
    let mut unmatched = 0;
    for (id, range) in trajectory_ranges(a.ids()) {
        let ends = b_groups.binary_search_by_key(&id, |g| g.0).map_or(0..0, |k| b_groups[k].1.clone());
        let mut j = ends.start;
        for i in range {
            while j < ends.end && b.times()[j] < a.times()[i] {
                j += 1;
            }
            if j == ends.end {
                unmatched += 1;
                continue;
            }
            rows.push(IntervalRow {
                trajectory_id: id,
                start: a.times()[i],
                end: b.times()[j],
                element_type: a.types()[i].clone(),
                value: a.values()[i].clone(),
                order: a.order()[i],
            });
            j += 1;
        }
    }
    (rows, unmatched)
}

fn union(parts: Vec<Data>, span: Span) -> Result<Data, EvalError> {
    let mut events = Vec::new();
    let mut intervals = Vec::new();
    for p in parts {
        match p {
            Data::Events(e) => events.push(e),
            Data::TimeSeries(t) => events.push(t.to_events()),
            Data::Intervals(s) => intervals.push(s),
            other => {
                return Err(err(
                    EvalErrorKind::Type,
                    format!("union() combines events or intervals, found {}", other.kind().label()),
                    span,
                ))
            }
        }
    }
    if !events.is_empty() && !intervals.is_empty() {
        return Err(err(EvalErrorKind::Type, "union() cannot mix events and intervals", span));
    }
    let name = "union";
    let mut k = 0u64;
    let mut next = || {
        k += 1;
        k
    };
    if intervals.is_empty() {
        let rows = events
            .iter()
            .flat_map(|e| e.rows())
            .map(|mut r| {
                r.order = next();
                r
            })
            .collect();
        Ok(Data::Events(EventSeries::new(name, rows)))
    } else {
        let rows = intervals
            .iter()
            .flat_map(|s| s.rows())
            .map(|mut r| {
                r.order = next();
                r
            })
            .collect();
        Ok(Data::Intervals(IntervalSeries::new(name, rows).0))
    }
}
