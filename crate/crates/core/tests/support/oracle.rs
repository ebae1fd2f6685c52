//! Brute-force reference implementation of windowed aggregation, written
//! against raw rows without touching the library's series or evaluator code.
//! Every timestep rescans every row of its trajectory.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::prelude::*;

use tempoql::dataset::Dataset;
use tempoql::series::Data;
use tempoql::value::Value;

pub const HOUR: i64 = 3_600_000;
/// 2020-01-01T00:00:00Z.
pub const BASE: i64 = 1_577_836_800_000;

// ---- raw data -------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RawEvent {
    pub id: i64,
    pub t: i64,
    pub item: String,
    pub v: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RawInterval {
    pub id: i64,
    pub start: i64,
    pub end: i64,
    pub item: String,
    pub v: Option<f64>,
}

/// A tiny three-table dataset: a `Start` timestamp attribute, a `Lab` event
/// table and a `Drip` interval table, both keyed by an `item` column.
#[derive(Debug, Clone, Default)]
pub struct MiniData {
    pub starts: Vec<(i64, Option<i64>)>,
    pub events: Vec<RawEvent>,
    pub intervals: Vec<RawInterval>,
}

pub fn stamp(ms: i64) -> String {
    chrono::DateTime::from_timestamp_millis(ms).unwrap().format("%Y-%m-%d %H:%M:%S").to_string()
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl MiniData {
    pub fn write(&self, dir: &Path) {
        let mut s = String::from("id,start\n");
        for (id, t) in &self.starts {
            writeln!(s, "{id},{}", t.map(stamp).unwrap_or_default()).unwrap();
        }
        std::fs::write(dir.join("stays.csv"), s).unwrap();
        let mut s = String::from("id,time,item,value\n");
        for e in &self.events {
            writeln!(s, "{},{},{},{}", e.id, stamp(e.t), e.item, num(e.v)).unwrap();
        }
        std::fs::write(dir.join("lab.csv"), s).unwrap();
        let mut s = String::from("id,starttime,endtime,item,value\n");
        for i in &self.intervals {
            writeln!(s, "{},{},{},{},{}", i.id, stamp(i.start), stamp(i.end), i.item, num(i.v)).unwrap();
        }
        std::fs::write(dir.join("drip.csv"), s).unwrap();
        let spec = r#"{
  "tables": [
    {"source": "stays", "id_field": "id", "scope": "Stay",
     "attributes": {"Start": {"value_field": "start"}}},
    {"source": "lab", "type": "event", "id_field": "id", "time_field": "time",
     "concept_id_field": "item", "default_value_field": "value", "scope": "Lab"},
    {"source": "drip", "type": "interval", "id_field": "id", "start_time_field": "starttime",
     "end_time_field": "endtime", "concept_id_field": "item", "default_value_field": "value", "scope": "Drip"}
  ],
  "vocabularies": [],
  "joins": {}
}"#;
        std::fs::write(dir.join("spec.json"), spec).unwrap();
    }

    pub fn open(&self) -> (tempfile::TempDir, Dataset) {
        let dir = tempfile::tempdir().unwrap();
        self.write(dir.path());
        let ds = Dataset::open(&dir.path().join("spec.json")).unwrap();
        (dir, ds)
    }

    pub fn universe(&self) -> Vec<i64> {
        let mut ids: BTreeSet<i64> = self.starts.iter().map(|s| s.0).collect();
        ids.extend(self.events.iter().map(|e| e.id));
        ids.extend(self.intervals.iter().map(|i| i.id));
        ids.into_iter().collect()
    }

    /// Earliest and latest observed time of a trajectory.
    pub fn span_of(&self, id: i64) -> Option<(i64, i64)> {
        let mut ts: Vec<i64> = self.events.iter().filter(|e| e.id == id).map(|e| e.t).collect();
        for i in self.intervals.iter().filter(|i| i.id == id) {
            ts.push(i.start);
            ts.push(i.end);
        }
        Some((*ts.iter().min()?, *ts.iter().max()?))
    }

    fn start_attr(&self, id: i64) -> Option<i64> {
        self.starts.iter().find(|s| s.0 == id).and_then(|s| s.1)
    }
}

// ---- oracle values ----------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum O {
    Num(f64),
    Bool(bool),
    Dur(i64),
    Missing,
}

impl O {
    pub fn from_value(v: &Value) -> O {
        match v {
            Value::Number(n) => O::Num(*n),
            Value::Boolean(b) => O::Bool(*b),
            Value::Duration(d) => O::Dur(*d),
            Value::Missing => O::Missing,
            other => panic!("unexpected value in aggregate output: {other:?}"),
        }
    }

    /// Exact for booleans and counts, 1e-9 relative for floats.
    pub fn close(&self, other: &O) -> bool {
        match (self, other) {
            (O::Num(a), O::Num(b)) => a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()),
            (O::Dur(a), O::Dur(b)) => (a - b).abs() <= 1,
            (a, b) => a == b,
        }
    }
}

// ---- query cases ----------------------------------------------------------------

pub const FUNCS: [&str; 17] = [
    "count",
    "count nonnull",
    "count distinct",
    "count distinct nonnull",
    "exists",
    "exists nonnull",
    "all nonnull",
    "any",
    "all",
    "first",
    "last",
    "sum",
    "mean",
    "median",
    "min",
    "max",
    "integral",
];

pub const MODES: [&str; 4] = ["value", "duration", "rate", "amount"];

#[derive(Debug, Clone)]
pub enum Target {
    Events,
    EventsBool,
    Intervals(Option<&'static str>),
    IntervalsBool(Option<&'static str>),
}

#[derive(Debug, Clone)]
pub enum Bounds {
    Default,
    FromTo(i64, i64),
    MinToMax,
    Before,
    After,
    At,
}

#[derive(Debug, Clone)]
pub enum Step {
    Whole,
    Every { hours: i64, from_start: bool },
    AtEvery,
}

#[derive(Debug, Clone)]
pub struct AggCase {
    pub func: &'static str,
    pub target: Target,
    pub bounds: Bounds,
    pub step: Step,
}

impl AggCase {
    pub fn query(&self) -> String {
        let (mode, target) = match &self.target {
            Target::Events => (None, "{A; scope = Lab}".to_string()),
            Target::EventsBool => (None, "({A; scope = Lab} > 50)".to_string()),
            Target::Intervals(m) => (*m, "{D; scope = Drip}".to_string()),
            Target::IntervalsBool(m) => (*m, "({D; scope = Drip} > 50)".to_string()),
        };
        let mut q = self.func.to_string();
        if let Some(m) = mode {
            q += " ";
            q += m;
        }
        q += " ";
        q += &target;
        match self.bounds {
            Bounds::Default => {}
            Bounds::FromTo(a, b) => {
                let side = |k: i64| match k {
                    0 => "#now".to_string(),
                    k if k < 0 => format!("#now - {} h", -k),
                    k => format!("#now + {k} h"),
                };
                write!(q, " from {} to {}", side(a), side(b)).unwrap();
            }
            Bounds::MinToMax => q += " from #mintime to #maxtime",
            Bounds::Before => q += " before #now",
            Bounds::After => q += " after #now",
            Bounds::At => q += " at #now",
        }
        match self.step {
            Step::Whole => {}
            Step::Every { hours, from_start } => {
                write!(q, " every {hours} h").unwrap();
                if from_start {
                    q += " from {Start}";
                }
            }
            Step::AtEvery => q += " at every {B; scope = Lab}",
        }
        q
    }
}

/// One oracle output row: (trajectory, timestep or None for whole-trajectory, value).
pub type Row = (i64, Option<i64>, O);

/// Window membership written as explicit interval arithmetic over reals.
#[derive(Debug, Clone, Copy)]
struct Win {
    lo: Option<(i64, bool)>, // (bound, inclusive)
    hi: Option<(i64, bool)>,
}

impl Win {
    fn has(&self, x: f64) -> bool {
        let lo_ok = match self.lo {
            None => true,
            Some((l, inc)) => x > l as f64 || (inc && x == l as f64),
        };
        let hi_ok = match self.hi {
            None => true,
            Some((h, inc)) => x < h as f64 || (inc && x == h as f64),
        };
        lo_ok && hi_ok
    }
}

/// (shares a point, overlap length) for the interval `[s, e)`, or the point
/// `s` when the interval has zero length. A shared point is found by testing
/// the midpoint (or the single point) of the candidate intersection.
fn overlap(w: &Win, s: i64, e: i64) -> (bool, i64) {
    if s == e {
        return (w.has(s as f64), 0);
    }
    let lo = w.lo.map_or(s, |(l, _)| l.max(s));
    let hi = w.hi.map_or(e, |(h, _)| h.min(e));
    if lo > hi {
        return (false, 0);
    }
    let probe = (lo as f64 + hi as f64) / 2.0;
    let in_iv = probe >= s as f64 && probe < e as f64;
    let shared = if lo < hi { w.has(probe) && in_iv } else { w.has(lo as f64) && (lo as f64) < e as f64 && lo >= s };
    (shared, if shared { hi - lo } else { 0 })
}

fn reduce(func: &str, vals: &[O]) -> Result<O, String> {
    let present: Vec<&O> = vals.iter().filter(|v| **v != O::Missing).collect();
    let count = |n: usize| Ok(O::Num(n as f64));
    match func {
        "count" => count(vals.len()),
        "count nonnull" => count(present.len()),
        "count distinct" | "count distinct nonnull" => {
            let mut keys: Vec<String> = vals
                .iter()
                .filter(|v| func == "count distinct" || **v != O::Missing)
                .map(|v| format!("{v:?}"))
                .collect();
            keys.sort();
            keys.dedup();
            count(keys.len())
        }
        "exists" => Ok(O::Bool(!vals.is_empty())),
        "exists nonnull" => Ok(O::Bool(!present.is_empty())),
        "all nonnull" => Ok(O::Bool(present.len() == vals.len())),
        "any" | "all" => {
            let mut bools = Vec::new();
            for v in &present {
                match v {
                    O::Bool(b) => bools.push(*b),
                    _ => return Err(format!("{func} on non-boolean")),
                }
            }
            Ok(O::Bool(if func == "any" { bools.iter().any(|b| *b) } else { bools.iter().all(|b| *b) }))
        }
        "first" => Ok(vals.first().cloned().unwrap_or(O::Missing)),
        "last" => Ok(vals.last().cloned().unwrap_or(O::Missing)),
        _ => {
            if present.is_empty() {
                return Ok(O::Missing);
            }
            let durations = present.iter().all(|v| matches!(v, O::Dur(_)));
            let numbers = present.iter().all(|v| matches!(v, O::Num(_)));
            if !durations && !numbers {
                return Err(format!("{func} on non-numeric"));
            }
            let mut xs: Vec<f64> = present
                .iter()
                .map(|v| match v {
                    O::Num(n) => *n,
                    O::Dur(d) => *d as f64,
                    _ => unreachable!(),
                })
                .collect();
            let x = match func {
                "sum" | "integral" => xs.iter().sum(),
                "mean" => xs.iter().sum::<f64>() / xs.len() as f64,
                "median" => {
                    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let n = xs.len();
                    if n % 2 == 1 {
                        xs[n / 2]
                    } else {
                        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
                    }
                }
                "min" => xs.iter().cloned().reduce(f64::min).unwrap(),
                "max" => xs.iter().cloned().reduce(f64::max).unwrap(),
                _ => unreachable!("{func}"),
            };
            Ok(if durations { O::Dur(x.round() as i64) } else { O::Num(x) })
        }
    }
}

fn raw_value(v: Option<f64>, boolean: bool) -> O {
    match (v, boolean) {
        (None, _) => O::Missing,
        (Some(x), true) => O::Bool(x > 50.0),
        (Some(x), false) => O::Num(x),
    }
}

fn aggregate_at(data: &MiniData, case: &AggCase, id: i64, w: &Win) -> Result<O, String> {
    match &case.target {
        Target::Events | Target::EventsBool => {
            let boolean = matches!(case.target, Target::EventsBool);
            let mut rows: Vec<(i64, usize, O)> = data
                .events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.id == id && e.item == "A" && w.has(e.t as f64))
                .map(|(k, e)| (e.t, k, raw_value(e.v, boolean)))
                .collect();
            rows.sort_by_key(|r| (r.0, r.1));
            if case.func == "integral" {
                let pts: Vec<(i64, f64)> = rows
                    .iter()
                    .filter_map(|r| match r.2 {
                        O::Num(x) => Some((r.0, x)),
                        O::Missing => None,
                        _ => Some((r.0, f64::NAN)),
                    })
                    .collect();
                if pts.iter().any(|p| p.1.is_nan()) {
                    return Err("integral on non-numeric".into());
                }
                if pts.is_empty() {
                    return Ok(O::Missing);
                }
                let mut total = 0.0;
                for k in 1..pts.len() {
                    let dt = (pts[k].0 - pts[k - 1].0) as f64 / HOUR as f64;
                    total += dt * (pts[k].1 + pts[k - 1].1) / 2.0;
                }
                return Ok(O::Num(total));
            }
            let vals: Vec<O> = rows.into_iter().map(|r| r.2).collect();
            reduce(case.func, &vals)
        }
        Target::Intervals(mode) | Target::IntervalsBool(mode) => {
            let boolean = matches!(case.target, Target::IntervalsBool(_));
            let mut mode = mode.unwrap_or("value");
            if case.func == "integral" && mode == "value" {
                mode = "rate";
            }
            let mut rows: Vec<(i64, usize, O)> = Vec::new();
            for (k, iv) in data.intervals.iter().enumerate() {
                if iv.id != id || iv.item != "D" || iv.end < iv.start {
                    continue;
                }
                let (shared, ov) = overlap(w, iv.start, iv.end);
                if !shared {
                    continue;
                }
                let v = raw_value(iv.v, boolean);
                let c = match (mode, &v) {
                    ("value", _) => v,
                    ("duration", _) => O::Dur(ov),
                    (_, O::Missing) => O::Missing,
                    ("rate", O::Num(x)) => O::Num(x * ov as f64 / HOUR as f64),
                    ("amount", O::Num(x)) if iv.start == iv.end => O::Num(*x),
                    ("amount", O::Num(x)) => O::Num(x * ov as f64 / (iv.end - iv.start) as f64),
                    _ => return Err(format!("{mode} on non-numeric")),
                };
                rows.push((iv.start, k, c));
            }
            rows.sort_by_key(|r| (r.0, r.1));
            let vals: Vec<O> = rows.into_iter().map(|r| r.2).collect();
            let func = if case.func == "integral" { "sum" } else { case.func };
            reduce(func, &vals)
        }
    }
}

/// Expected output rows for `case`, or `Err` when evaluation must fail.
pub fn expected(data: &MiniData, case: &AggCase) -> Result<Vec<Row>, String> {
    // (trajectory, step time) pairs; `None` step time = whole trajectory.
    let mut steps: Vec<(i64, Option<i64>, Option<i64>)> = Vec::new(); // (id, step, now)
    for id in data.universe() {
        let span = data.span_of(id);
        match case.step {
            Step::Whole => steps.push((id, None, span.map(|s| s.1))),
            Step::Every { hours, from_start } => {
                let from = if from_start { data.start_attr(id) } else { span.map(|s| s.0) };
                let (Some(a), Some((_, b))) = (from, span) else { continue };
                let mut t = a;
                while t <= b {
                    steps.push((id, Some(t), Some(t)));
                    t += hours * HOUR;
                }
            }
            Step::AtEvery => {
                let ts: BTreeSet<i64> = data.events.iter().filter(|e| e.id == id && e.item == "B").map(|e| e.t).collect();
                for t in ts {
                    steps.push((id, Some(t), Some(t)));
                }
            }
        }
    }
    let mut out = Vec::new();
    for (id, step, now) in steps {
        let span = data.span_of(id);
        let win = match (&case.bounds, now) {
            (Bounds::Default | Bounds::MinToMax, _) => span.map(|(a, b)| Win { lo: Some((a, true)), hi: Some((b, true)) }),
            (_, None) => None,
            (Bounds::FromTo(a, b), Some(n)) => Some(Win { lo: Some((n + a * HOUR, true)), hi: Some((n + b * HOUR, false)) }),
            (Bounds::Before, Some(n)) => Some(Win { lo: None, hi: Some((n, false)) }),
            (Bounds::After, Some(n)) => Some(Win { lo: Some((n, false)), hi: None }),
            (Bounds::At, Some(n)) => Some(Win { lo: Some((n, true)), hi: Some((n, true)) }),
        };
        let v = match win {
            None => O::Missing,
            Some(w) => aggregate_at(data, case, id, &w)?,
        };
        out.push((id, step, v));
    }
    Ok(out)
}

/// Flattens an evaluated aggregate into oracle rows.
pub fn rows_of(d: &Data) -> Vec<Row> {
    let times = d.row_times();
    d.row_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, times.map(|t| t[i]), O::from_value(&d.values()[i])))
        .collect()
}

pub fn same_rows(got: &[Row], want: &[Row]) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("row count {} vs expected {}", got.len(), want.len()));
    }
    for (g, w) in got.iter().zip(want) {
        if g.0 != w.0 || g.1 != w.1 || !g.2.close(&w.2) {
            return Err(format!("row {g:?} vs expected {w:?}"));
        }
    }
    Ok(())
}

// ---- carry-forward -----------------------------------------------------------------

/// For each row, looks back over earlier rows of the same trajectory for the
/// nearest non-missing value within `horizon`.
pub fn carry_oracle(rows: &[(i64, i64, Option<f64>)], horizon: i64) -> Vec<Option<f64>> {
    rows.iter()
        .enumerate()
        .map(|(i, &(id, t, v))| {
            if v.is_some() {
                return v;
            }
            let mut best: Option<(i64, f64)> = None;
            for &(id2, t2, v2) in &rows[..i] {
                if let (true, Some(x)) = (id2 == id, v2) {
                    if t - t2 > 0 && t - t2 <= horizon && best.is_none_or(|b| t2 >= b.0) {
                        best = Some((t2, x));
                    }
                }
            }
            best.map(|b| b.1)
        })
        .collect()
}

// ---- random generation -------------------------------------------------------------

fn maybe(rng: &mut impl Rng, p_missing: f64) -> Option<f64> {
    // One decimal keeps CSV round-trips exact.
    (!rng.random_bool(p_missing)).then(|| rng.random_range(0..1000) as f64 / 10.0)
}

/// Random dataset on a half-hour grid over three days.
pub fn random_data(rng: &mut impl Rng, max_traj: usize, max_rows: usize) -> MiniData {
    let grid = |rng: &mut dyn RngCore| BASE + (rng.next_u32() % 144) as i64 * HOUR / 2;
    let mut d = MiniData::default();
    for id in 1..=rng.random_range(1..=max_traj) as i64 {
        if rng.random_bool(0.8) {
            let t = rng.random_bool(0.9).then(|| grid(rng));
            d.starts.push((id, t));
        }
        for _ in 0..rng.random_range(0..=max_rows) {
            let item = ["A", "A", "B"][rng.random_range(0..3)].to_string();
            d.events.push(RawEvent { id, t: grid(rng), item, v: maybe(rng, 0.15) });
        }
        for _ in 0..rng.random_range(0..=max_rows / 4) {
            let start = grid(rng);
            let len = [0, 1, 3, 8, 20][rng.random_range(0..5)] * HOUR / 2;
            let item = ["D", "D", "E"][rng.random_range(0..3)].to_string();
            d.intervals.push(RawInterval { id, start, end: start + len, item, v: maybe(rng, 0.15) });
        }
    }
    d
}

pub fn random_case(rng: &mut impl Rng) -> AggCase {
    let func = FUNCS[rng.random_range(0..FUNCS.len())];
    let boolean = matches!(func, "any" | "all") || rng.random_bool(0.1);
    let mode = match rng.random_range(0..6) {
        0 | 1 => None,
        k => Some(MODES[k - 2]),
    };
    let target = match (rng.random_bool(0.5), boolean) {
        (true, false) => Target::Events,
        (true, true) => Target::EventsBool,
        (false, false) => Target::Intervals(mode),
        (false, true) => Target::IntervalsBool(mode),
    };
    let bounds = match rng.random_range(0..7) {
        0 => Bounds::Default,
        1 => Bounds::MinToMax,
        2 => Bounds::Before,
        3 => Bounds::After,
        4 => Bounds::At,
        _ => {
            let a = -rng.random_range(0..12);
            Bounds::FromTo(a, a + rng.random_range(0..12))
        }
    };
    let step = match rng.random_range(0..3) {
        0 => Step::Whole,
        1 => Step::Every { hours: [1, 2, 4, 6, 24][rng.random_range(0..5)], from_start: rng.random_bool(0.4) },
        _ => Step::AtEvery,
    };
    AggCase { func, target, bounds, step }
}
