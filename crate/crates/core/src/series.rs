//! Element collections keyed by trajectory, and the broadcasting rules that
//! combine them.
//!
//! Every series is immutable once built. Rows are kept in canonical order:
//! by trajectory, then time, then source order.

use std::cmp::Ordering;
use std::ops::Range;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::value::{apply_scalar_op, format_timestamp, BinaryOp, Value, ValueError};

pub type TrajectoryId = i64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("misaligned series index: first divergence at trajectory {trajectory}{}", .time.map(|t| format!(", time {}", format_timestamp(t))).unwrap_or_default())]
    Misaligned {
        trajectory: TrajectoryId,
        time: Option<i64>,
    },
    #[error("cannot combine {lhs} with {rhs}")]
    KindMismatch {
        lhs: &'static str,
        rhs: &'static str,
    },
    #[error("duplicate trajectory {0} in attribute series")]
    DuplicateTrajectory(TrajectoryId),
    #[error(transparent)]
    Value(#[from] ValueError),
}

/// One value slot per trajectory; trajectory ids strictly ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeSeries {
    name: String,
    ids: Vec<TrajectoryId>,
    values: Vec<Value>,
}

impl AttributeSeries {
    pub fn new(
        name: impl Into<String>,
        mut pairs: Vec<(TrajectoryId, Value)>,
    ) -> Result<Self, SeriesError> {
        pairs.sort_by_key(|(id, _)| *id);
        if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(SeriesError::DuplicateTrajectory(w[0].0));
        }
        let (ids, values) = pairs.into_iter().unzip();
        Ok(AttributeSeries {
            name: name.into(),
            ids,
            values,
        })
    }

    pub(crate) fn from_sorted(name: impl Into<String>, ids: Vec<TrajectoryId>, values: Vec<Value>) -> Self {
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        debug_assert_eq!(ids.len(), values.len());
        AttributeSeries {
            name: name.into(),
            ids,
            values,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn ids(&self) -> &[TrajectoryId] {
        &self.ids
    }
    pub fn values(&self) -> &[Value] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: TrajectoryId) -> Option<&Value> {
        self.ids.binary_search(&id).ok().map(|i| &self.values[i])
    }

    pub fn with_values(&self, values: Vec<Value>) -> Self {
        assert_eq!(values.len(), self.values.len());
        AttributeSeries {
            name: self.name.clone(),
            ids: self.ids.clone(),
            values,
        }
    }
}

/// A single event row, used to build an [`EventSeries`].
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub trajectory_id: TrajectoryId,
    pub time: i64,
    pub element_type: Arc<str>,
    pub value: Value,
    pub order: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EventSeries {
    name: String,
    ids: Vec<TrajectoryId>,
    times: Vec<i64>,
    types: Vec<Arc<str>>,
    values: Vec<Value>,
    order: Vec<u64>,
}

impl EventSeries {
    /// Builds a series from rows in any order; the result is sorted by
    /// (trajectory, time, source order).
    pub fn new(name: impl Into<String>, mut rows: Vec<EventRow>) -> Self {
        rows.sort_by(|a, b| {
            (a.trajectory_id, a.time, a.order).cmp(&(b.trajectory_id, b.time, b.order))
        });
        let mut s = EventSeries {
            name: name.into(),
            ..Default::default()
        };
        for r in rows {
            s.ids.push(r.trajectory_id);
            s.times.push(r.time);
            s.types.push(r.element_type);
            s.values.push(r.value);
            s.order.push(r.order);
        }
        s
    }

    pub(crate) fn from_sorted_columns(
        name: impl Into<String>,
        ids: Vec<TrajectoryId>,
        times: Vec<i64>,
        types: Vec<Arc<str>>,
        values: Vec<Value>,
        order: Vec<u64>,
    ) -> Self {
        debug_assert!(ids.len() == times.len() && times.len() == values.len());
        debug_assert!((1..ids.len()).all(|i| {
            (ids[i - 1], times[i - 1], order[i - 1]) <= (ids[i], times[i], order[i])
        }));
        EventSeries {
            name: name.into(),
            ids,
            times,
            types,
            values,
            order,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn ids(&self) -> &[TrajectoryId] {
        &self.ids
    }
    pub fn times(&self) -> &[i64] {
        &self.times
    }
    pub fn types(&self) -> &[Arc<str>] {
        &self.types
    }
    pub fn values(&self) -> &[Value] {
        &self.values
    }
    pub fn order(&self) -> &[u64] {
        &self.order
    }
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = EventRow> + '_ {
        (0..self.len()).map(|i| EventRow {
            trajectory_id: self.ids[i],
            time: self.times[i],
            element_type: self.types[i].clone(),
            value: self.values[i].clone(),
            order: self.order[i],
        })
    }

    pub fn with_values(&self, values: Vec<Value>) -> Self {
        assert_eq!(values.len(), self.values.len());
        EventSeries {
            values,
            ..self.clone_index()
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn clone_index(&self) -> Self {
        EventSeries {
            name: self.name.clone(),
            ids: self.ids.clone(),
            times: self.times.clone(),
            types: self.types.clone(),
            values: Vec::new(),
            order: self.order.clone(),
        }
    }

    /// Keeps rows whose mask entry is true, preserving order.
    pub fn filter(&self, keep: &[bool]) -> Self {
        let mut out = EventSeries {
            name: self.name.clone(),
            ..Default::default()
        };
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.ids.push(self.ids[i]);
            out.times.push(self.times[i]);
            out.types.push(self.types[i].clone());
            out.values.push(self.values[i].clone());
            out.order.push(self.order[i]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRow {
    pub trajectory_id: TrajectoryId,
    pub start: i64,
    pub end: i64,
    pub element_type: Arc<str>,
    pub value: Value,
    pub order: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct IntervalSeries {
    name: String,
    ids: Vec<TrajectoryId>,
    starts: Vec<i64>,
    ends: Vec<i64>,
    types: Vec<Arc<str>>,
    values: Vec<Value>,
    order: Vec<u64>,
}

impl IntervalSeries {
    /// Builds a series sorted by (trajectory, start, source order). Rows with
    /// `end < start` are dropped; the number dropped is returned alongside.
    pub fn new(name: impl Into<String>, rows: Vec<IntervalRow>) -> (Self, usize) {
        let before = rows.len();
        let mut rows: Vec<IntervalRow> = rows.into_iter().filter(|r| r.start <= r.end).collect();
        let dropped = before - rows.len();
        rows.sort_by(|a, b| (a.trajectory_id, a.start, a.order).cmp(&(b.trajectory_id, b.start, b.order)));
        let mut s = IntervalSeries {
            name: name.into(),
            ..Default::default()
        };
        for r in rows {
            s.ids.push(r.trajectory_id);
            s.starts.push(r.start);
            s.ends.push(r.end);
            s.types.push(r.element_type);
            s.values.push(r.value);
            s.order.push(r.order);
        }
        (s, dropped)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn ids(&self) -> &[TrajectoryId] {
        &self.ids
    }
    pub fn starts(&self) -> &[i64] {
        &self.starts
    }
    pub fn ends(&self) -> &[i64] {
        &self.ends
    }
    pub fn types(&self) -> &[Arc<str>] {
        &self.types
    }
    pub fn values(&self) -> &[Value] {
        &self.values
    }
    pub fn order(&self) -> &[u64] {
        &self.order
    }
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = IntervalRow> + '_ {
        (0..self.len()).map(|i| IntervalRow {
            trajectory_id: self.ids[i],
            start: self.starts[i],
            end: self.ends[i],
            element_type: self.types[i].clone(),
            value: self.values[i].clone(),
            order: self.order[i],
        })
    }

    pub fn with_values(&self, values: Vec<Value>) -> Self {
        assert_eq!(values.len(), self.values.len());
        IntervalSeries {
            name: self.name.clone(),
            ids: self.ids.clone(),
            starts: self.starts.clone(),
            ends: self.ends.clone(),
            types: self.types.clone(),
            values,
            order: self.order.clone(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn filter(&self, keep: &[bool]) -> Self {
        let mut out = IntervalSeries {
            name: self.name.clone(),
            ..Default::default()
        };
        for (i, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.ids.push(self.ids[i]);
            out.starts.push(self.starts[i]);
            out.ends.push(self.ends[i]);
            out.types.push(self.types[i].clone());
            out.values.push(self.values[i].clone());
            out.order.push(self.order[i]);
        }
        out
    }
}

/// Timestep-aligned output: one row per (trajectory, timestep).
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TimeSeries {
    name: String,
    ids: Vec<TrajectoryId>,
    times: Vec<i64>,
    values: Vec<Value>,
    provenance: String,
}

impl TimeSeries {
    /// Rows must already be unique and sorted by (trajectory, timestep).
    pub fn new(
        name: impl Into<String>,
        ids: Vec<TrajectoryId>,
        times: Vec<i64>,
        values: Vec<Value>,
        provenance: impl Into<String>,
    ) -> Self {
        assert!(ids.len() == times.len() && times.len() == values.len());
        assert!(
            (1..ids.len()).all(|i| (ids[i - 1], times[i - 1]) < (ids[i], times[i])),
            "time series index must be unique and sorted"
        );
        TimeSeries {
            name: name.into(),
            ids,
            times,
            values,
            provenance: provenance.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn ids(&self) -> &[TrajectoryId] {
        &self.ids
    }
    pub fn times(&self) -> &[i64] {
        &self.times
    }
    pub fn values(&self) -> &[Value] {
        &self.values
    }
    pub fn provenance(&self) -> &str {
        &self.provenance
    }
    pub fn len(&self) -> usize {
        self.ids.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Two time series are alignable iff their indices are identical.
    pub fn is_alignable(&self, other: &TimeSeries) -> bool {
        self.ids == other.ids && self.times == other.times
    }

    pub fn with_values(&self, values: Vec<Value>) -> Self {
        assert_eq!(values.len(), self.values.len());
        TimeSeries {
            name: self.name.clone(),
            ids: self.ids.clone(),
            times: self.times.clone(),
            values,
            provenance: self.provenance.clone(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn filter(&self, keep: &[bool]) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        TimeSeries {
            name: self.name.clone(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            times: idx.iter().map(|&i| self.times[i]).collect(),
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Views the time series as events at each timestep.
    pub fn to_events(&self) -> EventSeries {
        let ty: Arc<str> = Arc::from(self.name.as_str());
        EventSeries::from_sorted_columns(
            self.name.clone(),
            self.ids.clone(),
            self.times.clone(),
            vec![ty; self.len()],
            self.values.clone(),
            (0..self.len() as u64).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Scalar,
    Attributes,
    Events,
    Intervals,
    TimeSeries,
}

impl DataKind {
    pub fn label(self) -> &'static str {
        match self {
            DataKind::Scalar => "scalar",
            DataKind::Attributes => "attributes",
            DataKind::Events => "events",
            DataKind::Intervals => "intervals",
            DataKind::TimeSeries => "time series",
        }
    }
}

/// Any evaluated value: a scalar or one of the four series kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    Scalar(Value),
    Attributes(AttributeSeries),
    Events(EventSeries),
    Intervals(IntervalSeries),
    TimeSeries(TimeSeries),
}

impl Data {
    pub fn kind(&self) -> DataKind {
        match self {
            Data::Scalar(_) => DataKind::Scalar,
            Data::Attributes(_) => DataKind::Attributes,
            Data::Events(_) => DataKind::Events,
            Data::Intervals(_) => DataKind::Intervals,
            Data::TimeSeries(_) => DataKind::TimeSeries,
        }
    }

    pub fn values(&self) -> &[Value] {
        match self {
            Data::Scalar(v) => std::slice::from_ref(v),
            Data::Attributes(s) => s.values(),
            Data::Events(s) => s.values(),
            Data::Intervals(s) => s.values(),
            Data::TimeSeries(s) => s.values(),
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    /// Trajectory id of every row (empty for scalars).
    pub fn row_ids(&self) -> &[TrajectoryId] {
        match self {
            Data::Scalar(_) => &[],
            Data::Attributes(s) => s.ids(),
            Data::Events(s) => s.ids(),
            Data::Intervals(s) => s.ids(),
            Data::TimeSeries(s) => s.ids(),
        }
    }

    /// Row time for events (time), intervals (start) and time series (timestep).
    pub fn row_times(&self) -> Option<&[i64]> {
        match self {
            Data::Events(s) => Some(s.times()),
            Data::Intervals(s) => Some(s.starts()),
            Data::TimeSeries(s) => Some(s.times()),
            _ => None,
        }
    }

    pub fn with_values(&self, values: Vec<Value>) -> Data {
        match self {
            Data::Scalar(_) => Data::Scalar(values.into_iter().next().unwrap_or_default()),
            Data::Attributes(s) => Data::Attributes(s.with_values(values)),
            Data::Events(s) => Data::Events(s.with_values(values)),
            Data::Intervals(s) => Data::Intervals(s.with_values(values)),
            Data::TimeSeries(s) => Data::TimeSeries(s.with_values(values)),
        }
    }

    pub fn map_values<F>(&self, mut f: F) -> Result<Data, ValueError>
    where
        F: FnMut(&Value) -> Result<Value, ValueError>,
    {
        let values = self.values().iter().map(&mut f).collect::<Result<Vec<_>, _>>()?;
        Ok(self.with_values(values))
    }

    fn rank(&self) -> u8 {
        match self {
            Data::Scalar(_) => 0,
            Data::Attributes(_) => 1,
            _ => 2,
        }
    }
}

/// Contiguous row ranges per trajectory for a slice of sorted ids.
pub fn trajectory_ranges(ids: &[TrajectoryId]) -> Vec<(TrajectoryId, Range<usize>)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=ids.len() {
        if i == ids.len() || ids[i] != ids[start] {
            if start < ids.len() {
                out.push((ids[start], start..i));
            }
            start = i;
        }
    }
    out
}

/// Lays `other`'s values onto the rows of `target`.
///
/// Scalars repeat, attributes fan out by trajectory (absent trajectories give
/// missing), and same-kind series must share an identical index. Events and
/// time series align when their distinct (trajectory, time) key sets match.
pub fn expand_onto(target: &Data, other: &Data) -> Result<Vec<Value>, SeriesError> {
    let n = target.len();
    match (target, other) {
        (_, Data::Scalar(v)) => Ok(vec![v.clone(); n]),
        (Data::Scalar(_), _) => Err(SeriesError::KindMismatch {
            lhs: target.kind().label(),
            rhs: other.kind().label(),
        }),
        (_, Data::Attributes(attr)) => Ok(fan_out(target.row_ids(), attr)),
        (Data::Attributes(_), _) => Err(SeriesError::KindMismatch {
            lhs: target.kind().label(),
            rhs: other.kind().label(),
        }),
        (Data::Events(a), Data::Events(b)) => {
            check_identical(a.ids(), Some(a.times()), b.ids(), Some(b.times()))?;
            Ok(b.values().to_vec())
        }
        (Data::TimeSeries(a), Data::TimeSeries(b)) => {
            check_identical(a.ids(), Some(a.times()), b.ids(), Some(b.times()))?;
            Ok(b.values().to_vec())
        }
        (Data::Intervals(a), Data::Intervals(b)) => {
            check_identical(a.ids(), Some(a.starts()), b.ids(), Some(b.starts()))?;
            if a.ends() != b.ends() {
                let i = (0..a.len()).find(|&i| a.ends()[i] != b.ends()[i]).unwrap_or(0);
                return Err(SeriesError::Misaligned {
                    trajectory: a.ids()[i],
                    time: Some(a.starts()[i]),
                });
            }
            Ok(b.values().to_vec())
        }
        (Data::Events(_), Data::TimeSeries(_)) | (Data::TimeSeries(_), Data::Events(_)) => {
            let (tk, ok) = (keys(target), keys(other));
            check_same_key_set(&tk, &ok)?;
            lookup_by_key(&tk, &ok, other.values())
        }
        _ => Err(SeriesError::KindMismatch {
            lhs: target.kind().label(),
            rhs: other.kind().label(),
        }),
    }
}

fn keys(d: &Data) -> Vec<(TrajectoryId, i64)> {
    let times = d.row_times().unwrap_or(&[]);
    d.row_ids().iter().copied().zip(times.iter().copied()).collect()
}

fn fan_out(ids: &[TrajectoryId], attr: &AttributeSeries) -> Vec<Value> {
    let mut out = Vec::with_capacity(ids.len());
    let mut j = 0;
    let aids = attr.ids();
    for (i, &id) in ids.iter().enumerate() {
        // Row ids are sorted for every series kind, so a forward merge suffices.
        if i > 0 && id < ids[i - 1] {
            j = 0;
        }
        while j < aids.len() && aids[j] < id {
            j += 1;
        }
        if j < aids.len() && aids[j] == id {
            out.push(attr.values()[j].clone());
        } else {
            out.push(Value::Missing);
        }
    }
    out
}

fn check_identical(
    a_ids: &[TrajectoryId],
    a_times: Option<&[i64]>,
    b_ids: &[TrajectoryId],
    b_times: Option<&[i64]>,
) -> Result<(), SeriesError> {
    let n = a_ids.len().max(b_ids.len());
    for i in 0..n {
        let a = a_ids.get(i).map(|id| (*id, a_times.map(|t| t[i])));
        let b = b_ids.get(i).map(|id| (*id, b_times.map(|t| t[i])));
        if a != b {
            let (trajectory, time) = match (a, b) {
                (Some(x), Some(y)) => std::cmp::min(x, y),
                (Some(x), None) | (None, Some(x)) => x,
                (None, None) => unreachable!(),
            };
            return Err(SeriesError::Misaligned { trajectory, time });
        }
    }
    Ok(())
}

fn check_same_key_set(a: &[(TrajectoryId, i64)], b: &[(TrajectoryId, i64)]) -> Result<(), SeriesError> {
    let mut da = a.to_vec();
    da.dedup();
    let mut db = b.to_vec();
    db.dedup();
    let n = da.len().max(db.len());
    for i in 0..n {
        if da.get(i) != db.get(i) {
            let first = match (da.get(i), db.get(i)) {
                (Some(x), Some(y)) => *std::cmp::min(x, y),
                (Some(x), None) | (None, Some(x)) => *x,
                (None, None) => unreachable!(),
            };
            return Err(SeriesError::Misaligned {
                trajectory: first.0,
                time: Some(first.1),
            });
        }
    }
    Ok(())
}

/// For each target key, the value of the first `other` row with that key.
pub(crate) fn lookup_by_key(
    target: &[(TrajectoryId, i64)],
    other: &[(TrajectoryId, i64)],
    values: &[Value],
) -> Result<Vec<Value>, SeriesError> {
    let mut out = Vec::with_capacity(target.len());
    for key in target {
        let idx = other.partition_point(|k| k.cmp(key) == Ordering::Less);
        if idx < other.len() && other[idx] == *key {
            out.push(values[idx].clone());
        } else {
            return Err(SeriesError::Misaligned {
                trajectory: key.0,
                time: Some(key.1),
            });
        }
    }
    Ok(out)
}

/// Combines two operands value-by-value, broadcasting to the larger shape.
pub fn zip_with<F>(lhs: &Data, rhs: &Data, mut f: F) -> Result<Data, SeriesError>
where
    F: FnMut(&Value, &Value) -> Result<Value, ValueError>,
{
    match (lhs, rhs) {
        (Data::Scalar(a), Data::Scalar(b)) => Ok(Data::Scalar(f(a, b)?)),
        (Data::Attributes(a), Data::Attributes(b)) => {
            let mut ids: Vec<TrajectoryId> = a.ids().iter().chain(b.ids()).copied().collect();
            ids.sort_unstable();
            ids.dedup();
            let mut values = Vec::with_capacity(ids.len());
            for id in &ids {
                let x = a.get(*id).cloned().unwrap_or_default();
                let y = b.get(*id).cloned().unwrap_or_default();
                values.push(f(&x, &y)?);
            }
            Ok(Data::Attributes(AttributeSeries::from_sorted(a.name(), ids, values)))
        }
        _ => {
            let lhs_is_template = match lhs.rank().cmp(&rhs.rank()) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => !matches!((lhs, rhs), (Data::TimeSeries(_), Data::Events(_))),
            };
            let (template, other) = if lhs_is_template { (lhs, rhs) } else { (rhs, lhs) };
            let other_vals = expand_onto(template, other)?;
            let mut out = Vec::with_capacity(template.len());
            for (t, o) in template.values().iter().zip(&other_vals) {
                out.push(if lhs_is_template { f(t, o)? } else { f(o, t)? });
            }
            Ok(template.with_values(out))
        }
    }
}

/// Applies a binary operator element-wise with broadcasting.
pub fn broadcast(op: BinaryOp, lhs: &Data, rhs: &Data) -> Result<Data, SeriesError> {
    zip_with(lhs, rhs, |a, b| apply_scalar_op(op, a, b))
}
