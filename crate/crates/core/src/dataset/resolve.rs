//! Element query resolution: criteria → eligible tables → matched concepts
//! → one series of the resolved kind.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::Serialize;

use super::catalog::element_kind;
use super::ingest::normalize_key;
use super::matcher::TextMatcher;
use super::spec::{TableKind, Transform};
use super::{Dataset, DatasetError, Table};
use crate::lang::{unparse, CriterionOperand, ElementKind, ElementQuery, Expr, ExprKind, Field, Span};
use crate::series::{AttributeSeries, Data, EventSeries, IntervalRow, IntervalSeries, TrajectoryId};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanTable {
    pub source: String,
    pub scope: String,
    pub kind: ElementKind,
    /// `source.key → dest` hops used to obtain trajectory ids.
    pub join_chain: Vec<String>,
    pub concepts: Vec<String>,
    pub value_column: Option<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalPlan {
    pub query: String,
    pub kind: ElementKind,
    pub tables: Vec<PlanTable>,
    pub filters: Vec<String>,
    pub rendering: String,
}

struct Criteria {
    scopes: Vec<TextMatcher>,
    kind: Option<ElementKind>,
    kind_conflict: bool,
    names: Vec<TextMatcher>,
    ids: Vec<TextMatcher>,
    value: Option<String>,
    filters: Vec<String>,
}

fn compile(q: &ElementQuery) -> Result<Criteria, DatasetError> {
    let mut c = Criteria {
        scopes: vec![],
        kind: None,
        kind_conflict: false,
        names: vec![],
        ids: vec![],
        value: None,
        filters: vec![],
    };
    for cr in &q.criteria {
        let operand = match &cr.operand {
            CriterionOperand::Text(t) => format!("'{t}'"),
            CriterionOperand::List(items) => format!("({})", items.iter().map(|i| format!("'{i}'")).collect::<Vec<_>>().join(", ")),
            CriterionOperand::Regex(r) => format!("/{}/{}", r.pattern, if r.case_insensitive { "i" } else { "" }),
        };
        c.filters.push(format!("{} {} {}", cr.field.keyword(), cr.relation.keyword(), operand));
        match cr.field {
            Field::Scope => c.scopes.push(TextMatcher::new(cr.relation, &cr.operand)?),
            Field::Name => c.names.push(TextMatcher::new(cr.relation, &cr.operand)?),
            Field::Id => {
                // Numeric ids compare in canonical form.
                let norm = |s: &String| normalize_key(s).unwrap_or_else(|| s.clone());
                let operand = match &cr.operand {
                    CriterionOperand::Text(t) => CriterionOperand::Text(norm(t)),
                    CriterionOperand::List(items) => CriterionOperand::List(items.iter().map(norm).collect()),
                    other => other.clone(),
                };
                c.ids.push(TextMatcher::new(cr.relation, &operand)?)
            }
            Field::Type => {
                let k = match &cr.operand {
                    CriterionOperand::Text(t) => ElementKind::from_word(t),
                    _ => None,
                };
                match (c.kind, k) {
                    (_, None) => c.kind_conflict = true,
                    (Some(a), Some(b)) if a != b => c.kind_conflict = true,
                    (_, k) => c.kind = k,
                }
            }
            Field::Value => {
                if let CriterionOperand::Text(t) = &cr.operand {
                    c.value = Some(t.clone());
                }
            }
        }
    }
    Ok(c)
}

enum Matched<'a> {
    Attributes(&'a Table, Vec<String>),
    Rows(&'a Table, Vec<bool>, Vec<String>),
}

/// Resolves an element query against the dataset. Matching tables of one
/// kind are unioned; mixed kinds need a `type` criterion.
pub fn resolve_elements(ds: &Dataset, q: &ElementQuery) -> Result<(RetrievalPlan, Data), DatasetError> {
    let c = compile(q)?;
    let in_scope: Vec<&Table> = ds.tables.iter().filter(|t| c.scopes.iter().all(|m| m.is_match(&t.spec.scope))).collect();
    if !c.scopes.is_empty() && in_scope.is_empty() {
        let wanted = q
            .criteria
            .iter()
            .find(|cr| cr.field == Field::Scope)
            .map(|cr| match &cr.operand {
                CriterionOperand::Text(t) => t.clone(),
                other => format!("{other:?}"),
            })
            .unwrap_or_default();
        return Err(DatasetError::UnknownScope(wanted));
    }
    let eligible: Vec<&Table> = in_scope
        .into_iter()
        .filter(|t| !c.kind_conflict && c.kind.is_none_or(|k| element_kind(t.kind()) == k))
        .collect();

    let mut matched = Vec::new();
    for t in &eligible {
        if t.kind() == TableKind::Attributes {
            if !c.ids.is_empty() {
                continue;
            }
            let names: Vec<String> =
                t.spec.attributes.keys().filter(|n| c.names.iter().all(|m| m.is_match(n))).cloned().collect();
            if !names.is_empty() {
                matched.push(Matched::Attributes(t, names));
            }
            continue;
        }
        let is_concept = t.spec.concept_id_field.is_some();
        let mut mask = vec![false; t.type_keys.len()];
        let mut names = Vec::new();
        for (code, key) in t.type_keys.iter().enumerate() {
            let name = ds.concept_name(t, key);
            let id_ok = c.ids.is_empty() || (is_concept && c.ids.iter().all(|m| m.is_match(key)));
            if id_ok && c.names.iter().all(|m| m.is_match(name)) {
                mask[code] = true;
                names.push(if is_concept && name != key.as_ref() { format!("{name} [{key}]") } else { name.to_string() });
            }
        }
        if !names.is_empty() {
            names.sort();
            matched.push(Matched::Rows(t, mask, names));
        }
    }

    let kinds: BTreeSet<&'static str> = matched
        .iter()
        .map(|m| match m {
            Matched::Attributes(..) => ElementKind::Attribute.label(),
            Matched::Rows(t, ..) => element_kind(t.kind()).label(),
        })
        .collect();
    if kinds.len() > 1 {
        return Err(DatasetError::Ambiguous(kinds.iter().map(|k| k.to_string()).collect()));
    }
    let kind = match matched.first() {
        Some(Matched::Attributes(..)) => ElementKind::Attribute,
        Some(Matched::Rows(t, ..)) => element_kind(t.kind()),
        None => c.kind.unwrap_or_else(|| {
            let ks: BTreeSet<ElementKind> = eligible.iter().map(|t| element_kind(t.kind())).collect();
            match (ks.len(), ks.first()) {
                (1, Some(k)) => *k,
                _ => ElementKind::Event,
            }
        }),
    };

    let label = unparse(&Expr::new(ExprKind::Element(q.clone()), Span::default()));
    let mut plan_tables = Vec::new();
    let data = match kind {
        ElementKind::Attribute => {
            let all: Vec<(&Table, &String)> = matched
                .iter()
                .flat_map(|m| match m {
                    Matched::Attributes(t, names) => names.iter().map(|n| (*t, n)).collect::<Vec<_>>(),
                    _ => vec![],
                })
                .collect();
            if all.len() > 1 {
                return Err(DatasetError::MultipleAttributes(all.iter().map(|(_, n)| n.to_string()).collect()));
            }
            match all.first() {
                Some((t, name)) => {
                    if let Some(v) = &c.value {
                        if !t.columns.contains_key(v) {
                            return Err(DatasetError::UnknownValueColumn { table: t.spec.source.clone(), column: v.clone() });
                        }
                    }
                    let pairs = attribute_values(t, name, c.value.as_deref());
                    plan_tables.push(plan_table(ds, t, vec![name.to_string()], c.value.clone().or_else(|| Some(t.spec.attributes[*name].value_field.clone())), pairs.len()));
                    let series = AttributeSeries::new(name.as_str(), pairs).expect("one value per trajectory");
                    Data::Attributes(series)
                }
                None => Data::Attributes(AttributeSeries::new(label.clone(), vec![]).expect("empty")),
            }
        }
        ElementKind::Event | ElementKind::Interval => {
            let single_name = match matched.as_slice() {
                [Matched::Rows(t, mask, _)] if mask.iter().filter(|m| **m).count() == 1 => {
                    let code = mask.iter().position(|m| *m).unwrap();
                    Some(ds.concept_name(t, &t.type_keys[code]).to_string())
                }
                _ => None,
            };
            let series_name = single_name.unwrap_or_else(|| label.clone());
            let mut ev = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
            let mut iv: Vec<IntervalRow> = Vec::new();
            for (ti, m) in matched.iter().enumerate() {
                let Matched::Rows(t, mask, names) = m else { continue };
                let vcol = c.value.clone().or_else(|| t.spec.default_value_field.clone());
                let values = match &vcol {
                    Some(v) => Some(t.columns.get(v).ok_or_else(|| DatasetError::UnknownValueColumn {
                        table: t.spec.source.clone(),
                        column: v.clone(),
                    })?),
                    None => None,
                };
                let type_names: Vec<Arc<str>> = t.type_keys.iter().map(|k| Arc::from(ds.concept_name(t, k))).collect();
                let mut rows = 0;
                let prefix = (ti as u64) << 40;
                for i in 0..t.len() {
                    let code = t.type_codes[i] as usize;
                    if !mask[code] {
                        continue;
                    }
                    rows += 1;
                    let value = values.map_or(Value::Missing, |v| v[i].clone());
                    if kind == ElementKind::Event {
                        ev.0.push(t.ids[i]);
                        ev.1.push(t.times[i]);
                        ev.2.push(type_names[code].clone());
                        ev.3.push(value);
                        ev.4.push(prefix | t.order[i]);
                    } else {
                        iv.push(IntervalRow {
                            trajectory_id: t.ids[i],
                            start: t.times[i],
                            end: t.ends[i],
                            element_type: type_names[code].clone(),
                            value,
                            order: prefix | t.order[i],
                        });
                    }
                }
                plan_tables.push(plan_table(ds, t, names.clone(), vcol, rows));
            }
            if kind == ElementKind::Event {
                if matched.len() <= 1 {
                    Data::Events(EventSeries::from_sorted_columns(series_name, ev.0, ev.1, ev.2, ev.3, ev.4))
                } else {
                    let rows = (0..ev.0.len())
                        .map(|i| crate::series::EventRow {
                            trajectory_id: ev.0[i],
                            time: ev.1[i],
                            element_type: ev.2[i].clone(),
                            value: std::mem::take(&mut ev.3[i]),
                            order: ev.4[i],
                        })
                        .collect();
                    Data::Events(EventSeries::new(series_name, rows))
                }
            } else {
                Data::Intervals(IntervalSeries::new(series_name, iv).0)
            }
        }
    };

    let rendering = render_plan(&label, kind, &plan_tables, &c.filters);
    Ok((RetrievalPlan { query: label, kind, tables: plan_tables, filters: c.filters, rendering }, data))
}

fn plan_table(ds: &Dataset, t: &Table, concepts: Vec<String>, value_column: Option<String>, rows: usize) -> PlanTable {
    let mut join_chain = Vec::new();
    let mut cur = t.spec.source.clone();
    while t.joined && join_chain.len() < ds.spec.joins.len() {
        let Some(j) = ds.spec.joins.get(&cur) else { break };
        join_chain.push(format!("{cur}.{key} = {}.{key}", j.dest_table, key = j.join_key));
        cur = j.dest_table.clone();
    }
    PlanTable {
        source: t.spec.source.clone(),
        scope: t.spec.scope.clone(),
        kind: element_kind(t.kind()),
        join_chain,
        concepts,
        value_column,
        rows,
    }
}

fn render_plan(label: &str, kind: ElementKind, tables: &[PlanTable], filters: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "element {label} -> {} series", kind.label());
    if !filters.is_empty() {
        let _ = writeln!(s, "  where {}", filters.join(" and "));
    }
    if tables.is_empty() {
        let _ = writeln!(s, "  no matching concepts");
    }
    for t in tables {
        let _ = writeln!(s, "  from {} (scope {}, {} rows)", t.source, t.scope, t.rows);
        for j in &t.join_chain {
            let _ = writeln!(s, "    join {j}");
        }
        const SHOWN: usize = 20;
        let shown: Vec<&str> = t.concepts.iter().take(SHOWN).map(|s| s.as_str()).collect();
        let more = t.concepts.len().saturating_sub(SHOWN);
        let _ = write!(s, "    concepts: {}", shown.join(", "));
        if more > 0 {
            let _ = write!(s, " (+{more} more)");
        }
        s.push('\n');
        let _ = writeln!(s, "    value: {}", t.value_column.as_deref().unwrap_or("(none)"));
    }
    s
}

/// Per-trajectory attribute values: the first non-missing cell in source
/// order, after the attribute's transform.
pub(crate) fn attribute_values(t: &Table, name: &str, column: Option<&str>) -> Vec<(TrajectoryId, Value)> {
    let Some(attr) = t.spec.attributes.get(name) else { return vec![] };
    let col = column.unwrap_or(&attr.value_field);
    let Some(values) = t.columns.get(col) else { return vec![] };
    let mut out: Vec<(TrajectoryId, Value)> = Vec::new();
    for i in 0..t.len() {
        let id = t.ids[i];
        let v = &values[i];
        match out.last_mut() {
            Some((last, slot)) if *last == id => {
                if slot.is_missing() && !v.is_missing() {
                    *slot = apply_transform(attr.value_transform, v);
                }
            }
            _ => out.push((id, apply_transform(attr.value_transform, v))),
        }
    }
    out
}

pub(crate) fn apply_transform(t: Option<Transform>, v: &Value) -> Value {
    let number = |v: &Value| match v {
        Value::Number(n) => Some(*n),
        Value::Text(s) => s.trim().parse::<f64>().ok().filter(|n| n.is_finite()),
        Value::Boolean(b) => Some(if *b { 1.0 } else { 0.0 }),
        _ => None,
    };
    match t {
        None => v.clone(),
        Some(Transform::ToNumber) => number(v).map_or(Value::Missing, Value::Number),
        Some(Transform::ToLowercase) => match v {
            Value::Text(s) => Value::text(s.to_lowercase()),
            other => other.clone(),
        },
        Some(Transform::YearToTimestamp) => match number(v) {
            Some(y) if y.fract() == 0.0 && (1.0..=9999.0).contains(&y) => NaiveDate::from_ymd_opt(y as i32, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .map_or(Value::Missing, |d| Value::Timestamp(d.and_utc().timestamp_millis())),
            _ => Value::Missing,
        },
    }
}
