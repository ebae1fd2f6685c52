//! Query evaluation against an ingested dataset.
//!
//! Expressions are evaluated column-at-a-time over whole series; windowed
//! aggregation fans out across trajectories in parallel. Every subquery the
//! profiler lists is captured as it is produced.

mod aggregate;
mod builtins;
mod clauses;
mod steps;
mod window;

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{resolve_elements, Dataset};
use crate::lang::regex_subset;
use crate::lang::{
    extract_subqueries, parse, ElementQuery, Expr, ExprKind, Marker, ParseError, PatternOp, PatternOperand, Span,
    SubqueryKind, UnaryOp,
};
use crate::series::{broadcast, expand_onto, AttributeSeries, Data, SeriesError};
use crate::value::{apply_neg, apply_not, apply_scalar_op, convert_duration, BinaryOp, Value, ValueError};

pub use aggregate::{aggregate_windows, contribution, reduce, trapezoid};
pub use clauses::{carry_forward, cut_values};
pub use window::Window;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalErrorKind {
    Parse,
    UnresolvedName,
    Type,
    Alignment,
    Dataset,
    Cycle,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("{message}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub message: String,
    pub span: Span,
}

impl EvalError {
    pub fn new(kind: EvalErrorKind, message: impl Into<String>, span: Span) -> Self {
        EvalError { kind, message: message.into(), span }
    }

    fn value(e: ValueError, span: Span) -> Self {
        EvalError::new(EvalErrorKind::Type, e.to_string(), span)
    }

    fn series(e: SeriesError, span: Span) -> Self {
        let kind = match e {
            SeriesError::Value(_) => EvalErrorKind::Type,
            _ => EvalErrorKind::Alignment,
        };
        EvalError::new(kind, e.to_string(), span)
    }
}

impl From<ParseError> for EvalError {
    fn from(e: ParseError) -> Self {
        EvalError::new(EvalErrorKind::Parse, e.to_string(), e.span)
    }
}

/// One captured intermediate result.
#[derive(Debug, Clone)]
pub struct Capture {
    pub span: Span,
    pub kind: SubqueryKind,
    pub label: String,
    pub data: Data,
    /// Retrieval-plan rendering for element queries.
    pub plan: Option<String>,
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    pub result: Data,
    pub subqueries: Vec<Capture>,
    pub diagnostics: Vec<String>,
}

/// Named queries available to `evaluate`, by name → query text.
pub type StoreBindings = BTreeMap<String, String>;

/// Parses and evaluates `src`.
pub fn evaluate_text(src: &str, ds: &Dataset, store: &StoreBindings) -> Result<QueryResult, EvalError> {
    let ast = parse(src)?;
    evaluate(&ast, ds, store)
}

/// Evaluates a parsed query. Unknown variable names are looked up in
/// `store` (after `with` bindings) and evaluated on demand.
pub fn evaluate(ast: &Expr, ds: &Dataset, store: &StoreBindings) -> Result<QueryResult, EvalError> {
    let mut ev = Evaluator::new(ds, store);
    let result = ev.eval(ast)?;
    let mut subqueries = Vec::new();
    for sq in extract_subqueries(ast) {
        if let Some((data, plan)) = ev.captures.remove(&(sq.span, sq.kind)) {
            subqueries.push(Capture { span: sq.span, kind: sq.kind, label: sq.label, data, plan });
        }
    }
    let mut diagnostics = std::mem::take(&mut ev.diagnostics);
    diagnostics.dedup();
    Ok(QueryResult { result, subqueries, diagnostics })
}

pub(crate) struct Evaluator<'a> {
    ds: &'a Dataset,
    store: &'a StoreBindings,
    store_cache: HashMap<String, Data>,
    store_stack: Vec<String>,
    scopes: Vec<(String, Data)>,
    now: Option<Data>,
    value: Option<Data>,
    capturing: bool,
    captures: HashMap<(Span, SubqueryKind), (Data, Option<String>)>,
    elements: HashMap<ElementQuery, (Data, String)>,
    markers: RefCell<HashMap<Marker, Data>>,
    pub(crate) diagnostics: Vec<String>,
}

impl<'a> Evaluator<'a> {
    fn new(ds: &'a Dataset, store: &'a StoreBindings) -> Self {
        Evaluator {
            ds,
            store,
            store_cache: HashMap::new(),
            store_stack: Vec::new(),
            scopes: Vec::new(),
            now: None,
            value: None,
            capturing: true,
            captures: HashMap::new(),
            elements: HashMap::new(),
            markers: RefCell::new(HashMap::new()),
            diagnostics: Vec::new(),
        }
    }

    fn capture(&mut self, span: Span, kind: SubqueryKind, data: &Data, plan: Option<String>) {
        if self.capturing {
            self.captures.entry((span, kind)).or_insert_with(|| (data.clone(), plan));
        }
    }

    fn diag(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.diagnostics.contains(&msg) {
            self.diagnostics.push(msg);
        }
    }

    pub(crate) fn eval(&mut self, e: &Expr) -> Result<Data, EvalError> {
        let span = e.span;
        match &e.kind {
            ExprKind::Literal(v) => Ok(Data::Scalar(v.clone())),
            ExprKind::Duration { amount, unit } => {
                Ok(Data::Scalar(Value::Duration((amount * unit.millis()).round() as i64)))
            }
            ExprKind::Regex(_) => Err(EvalError::new(
                EvalErrorKind::Type,
                "a regex literal is only valid as a pattern or an extract() argument",
                span,
            )),
            ExprKind::Marker(m) => self.marker(*m, span),
            ExprKind::Variable(name) => {
                let data = self.variable(name, span)?;
                self.capture(span, SubqueryKind::Variable, &data, None);
                Ok(data)
            }
            ExprKind::Element(q) => {
                let (data, plan) = self.element(q, span)?;
                self.capture(span, SubqueryKind::Element, &data, Some(plan));
                Ok(data)
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let (l, r) = (self.eval(lhs)?, self.eval(rhs)?);
                broadcast(*op, &l, &r).map_err(|e| EvalError::series(e, span))
            }
            ExprKind::Unary { op, operand } => {
                let d = self.eval(operand)?;
                let f = match op {
                    UnaryOp::Not => apply_not,
                    UnaryOp::Neg => apply_neg,
                };
                d.map_values(f).map_err(|e| EvalError::value(e, span))
            }
            ExprKind::AsUnit { expr, unit } => {
                let d = self.eval(expr)?;
                d.map_values(|v| convert_duration(v, *unit)).map_err(|e| EvalError::value(e, span))
            }
            ExprKind::Between { expr, low, high } => {
                let (x, lo, hi) = (self.eval(expr)?, self.eval(low)?, self.eval(high)?);
                let a = broadcast(BinaryOp::Ge, &x, &lo).map_err(|e| EvalError::series(e, span))?;
                let b = broadcast(BinaryOp::Le, &x, &hi).map_err(|e| EvalError::series(e, span))?;
                broadcast(BinaryOp::And, &a, &b).map_err(|e| EvalError::series(e, span))
            }
            ExprKind::InList { expr, items } => {
                let x = self.eval(expr)?;
                let mut acc: Option<Data> = None;
                for item in items {
                    let v = self.eval(item)?;
                    let eq = broadcast(BinaryOp::Eq, &x, &v).map_err(|e| EvalError::series(e, span))?;
                    acc = Some(match acc {
                        None => eq,
                        Some(a) => broadcast(BinaryOp::Or, &a, &eq).map_err(|e| EvalError::series(e, span))?,
                    });
                }
                acc.ok_or_else(|| EvalError::new(EvalErrorKind::Invalid, "empty 'in' list", span))
            }
            ExprKind::Pattern { op, expr, pattern } => {
                let d = self.eval(expr)?;
                let m = Matcher::new(*op, pattern, span)?;
                Ok(d.with_values(d.values().iter().map(|v| m.apply(v)).collect()))
            }
            ExprKind::Case { branches, otherwise } => self.case(branches, otherwise.as_deref(), span),
            ExprKind::Call { name, args } => self.call(name, args, span),
            ExprKind::Aggregation(agg) => {
                let data = self.aggregation(agg, span)?;
                self.capture(span, SubqueryKind::Aggregation, &data, None);
                Ok(data)
            }
            ExprKind::Clause { target, clause } => self.clause(target, clause, span),
            ExprKind::With { name, value, body } => {
                let v = self.eval(value)?;
                self.scopes.push((name.clone(), v));
                let out = self.eval(body);
                self.scopes.pop();
                let out = out?;
                self.capture(body.span, SubqueryKind::WithBody, &out, None);
                Ok(out)
            }
        }
    }

    fn marker(&mut self, m: Marker, span: Span) -> Result<Data, EvalError> {
        match m {
            Marker::Now => self.now.clone().ok_or_else(|| {
                EvalError::new(EvalErrorKind::Invalid, "#now is only defined inside aggregation bounds", span)
            }),
            Marker::Value => self.value.clone().ok_or_else(|| {
                EvalError::new(EvalErrorKind::Invalid, "#value is only defined inside a where clause or impute", span)
            }),
            Marker::MinTime | Marker::MaxTime => Ok(self.bound_marker(m)),
        }
    }

    /// `#mintime` / `#maxtime` as an attribute over every trajectory.
    pub(crate) fn bound_marker(&self, m: Marker) -> Data {
        if let Some(d) = self.markers.borrow().get(&m) {
            return d.clone();
        }
        let ds = self.ds;
        let values: Vec<Value> = ds
            .time_bounds
            .iter()
            .map(|b| match (b, m) {
                (Some((lo, _)), Marker::MinTime) => Value::Timestamp(*lo),
                (Some((_, hi)), _) => Value::Timestamp(*hi),
                (None, _) => Value::Missing,
            })
            .collect();
        let series = AttributeSeries::new(m.text(), ds.trajectories.iter().copied().zip(values).collect())
            .expect("trajectory universe is unique");
        let d = Data::Attributes(series);
        self.markers.borrow_mut().insert(m, d.clone());
        d
    }

    fn element(&mut self, q: &ElementQuery, span: Span) -> Result<(Data, String), EvalError> {
        if let Some(hit) = self.elements.get(q) {
            return Ok(hit.clone());
        }
        let (plan, data) = resolve_elements(self.ds, q)
            .map_err(|e| EvalError::new(EvalErrorKind::Dataset, e.to_string(), span))?;
        let out = (data, plan.rendering);
        self.elements.insert(q.clone(), out.clone());
        Ok(out)
    }

    fn variable(&mut self, name: &str, span: Span) -> Result<Data, EvalError> {
        if let Some((_, d)) = self.scopes.iter().rev().find(|(n, _)| n == name) {
            return Ok(d.clone());
        }
        if let Some(d) = self.store_cache.get(name) {
            return Ok(d.clone());
        }
        let Some(text) = self.store.get(name) else {
            return Err(EvalError::new(EvalErrorKind::UnresolvedName, format!("unknown name '{name}'"), span));
        };
        if self.store_stack.iter().any(|n| n == name) {
            let mut chain = self.store_stack.clone();
            chain.push(name.to_string());
            return Err(EvalError::new(
                EvalErrorKind::Cycle,
                format!("stored queries reference each other in a cycle: {}", chain.join(" -> ")),
                span,
            ));
        }
        let ast = parse(text).map_err(|e| {
            EvalError::new(EvalErrorKind::Parse, format!("in stored query '{name}': {e}"), span)
        })?;
        // Stored queries see neither the caller's bindings nor its markers.
        let saved = (
            std::mem::take(&mut self.scopes),
            self.now.take(),
            self.value.take(),
            std::mem::replace(&mut self.capturing, false),
        );
        self.store_stack.push(name.to_string());
        let out = self.eval(&ast);
        self.store_stack.pop();
        (self.scopes, self.now, self.value, self.capturing) = saved;
        let data = out.map_err(|mut e| {
            if e.kind != EvalErrorKind::Cycle {
                e.message = format!("in stored query '{name}': {}", e.message);
            }
            e.span = span;
            e
        })?;
        self.store_cache.insert(name.to_string(), data.clone());
        Ok(data)
    }

    fn case(&mut self, branches: &[(Expr, Expr)], otherwise: Option<&Expr>, span: Span) -> Result<Data, EvalError> {
        let mut parts = Vec::new();
        for (w, t) in branches {
            parts.push(self.eval(w)?);
            parts.push(self.eval(t)?);
        }
        let other = match otherwise {
            Some(o) => self.eval(o)?,
            None => Data::Scalar(Value::Missing),
        };
        parts.push(other);
        let template = common_shape(&parts).map_err(|e| EvalError::series(e, span))?;
        let cols = parts
            .iter()
            .map(|p| expand_onto(&template, p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EvalError::series(e, span))?;
        let n = template.len();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut chosen = None;
            for b in 0..branches.len() {
                match &cols[2 * b][i] {
                    Value::Boolean(true) => {
                        chosen = Some(cols[2 * b + 1][i].clone());
                        break;
                    }
                    Value::Boolean(false) | Value::Missing => {}
                    other => {
                        return Err(EvalError::new(
                            EvalErrorKind::Type,
                            format!("'when' condition must be boolean, found {}", other.variant_name()),
                            branches[b].0.span,
                        ))
                    }
                }
            }
            out.push(chosen.unwrap_or_else(|| cols[cols.len() - 1][i].clone()));
        }
        Ok(template.with_values(out))
    }
}

/// The shape several operands broadcast to: the largest kind, with attribute
/// operands outer-joined on trajectory.
pub(crate) fn common_shape(parts: &[Data]) -> Result<Data, SeriesError> {
    let series: Vec<&Data> = parts.iter().filter(|d| !matches!(d, Data::Scalar(_) | Data::Attributes(_))).collect();
    if let Some(first) = series.iter().find(|d| !matches!(d, Data::TimeSeries(_))).or(series.first()) {
        return Ok((*first).clone());
    }
    let attrs: Vec<&AttributeSeries> = parts
        .iter()
        .filter_map(|d| match d {
            Data::Attributes(a) => Some(a),
            _ => None,
        })
        .collect();
    if attrs.is_empty() {
        return Ok(Data::Scalar(Value::Missing));
    }
    let mut ids: Vec<_> = attrs.iter().flat_map(|a| a.ids().iter().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    let pairs = ids.into_iter().map(|id| (id, Value::Missing)).collect();
    Ok(Data::Attributes(AttributeSeries::new(attrs[0].name(), pairs)?))
}

/// Text pattern test used by `contains`/`matches`/`startswith`/`endswith`.
struct Matcher {
    op: PatternOp,
    regex: Option<regex::Regex>,
    text: String,
}

impl Matcher {
    fn new(op: PatternOp, pattern: &PatternOperand, span: Span) -> Result<Self, EvalError> {
        Ok(match pattern {
            PatternOperand::Text(t) => Matcher { op, regex: None, text: t.clone() },
            PatternOperand::Regex(r) => {
                let anchored = match op {
                    PatternOp::Contains => r.pattern.clone(),
                    PatternOp::StartsWith => format!("^(?:{})", r.pattern),
                    PatternOp::EndsWith => format!("(?:{})$", r.pattern),
                    PatternOp::Matches => format!("^(?:{})$", r.pattern),
                };
                let invalid = |msg: String| EvalError::new(EvalErrorKind::Invalid, msg, span);
                regex_subset::validate(&r.pattern).map_err(|(msg, _)| invalid(format!("invalid regex: {msg}")))?;
                let regex = regex_subset::compile(&anchored, r.case_insensitive).map_err(|(msg, _)| invalid(msg))?;
                Matcher { op, regex: Some(regex), text: String::new() }
            }
        })
    }

    fn apply(&self, v: &Value) -> Value {
        if v.is_missing() {
            return Value::Missing;
        }
        let owned;
        let s: &str = match v {
            Value::Text(t) => t,
            other => {
                owned = other.render();
                &owned
            }
        };
        let hit = match &self.regex {
            Some(r) => r.is_match(s),
            None => match self.op {
                PatternOp::Contains => s.contains(&self.text),
                PatternOp::StartsWith => s.starts_with(&self.text),
                PatternOp::EndsWith => s.ends_with(&self.text),
                PatternOp::Matches => s == self.text,
            },
        };
        Value::Boolean(hit)
    }
}

/// Scalar helper shared by submodules.
pub(crate) fn scalar_op(op: BinaryOp, a: &Value, b: &Value, span: Span) -> Result<Value, EvalError> {
    apply_scalar_op(op, a, b).map_err(|e| EvalError::value(e, span))
}
