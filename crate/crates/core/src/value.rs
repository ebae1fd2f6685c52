//! The tagged scalar cell type and its arithmetic/comparison semantics.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MS_PER_SECOND: i64 = 1_000;
pub const MS_PER_MINUTE: i64 = 60 * MS_PER_SECOND;
pub const MS_PER_HOUR: i64 = 60 * MS_PER_MINUTE;
pub const MS_PER_DAY: i64 = 24 * MS_PER_HOUR;

/// A single cell. Timestamps are milliseconds since the Unix epoch (UTC),
/// durations are signed milliseconds.
#[derive(Debug, Clone, Default)]
pub enum Value {
    Number(f64),
    Text(Arc<str>),
    Boolean(bool),
    Timestamp(i64),
    Duration(i64),
    #[default]
    Missing,
}

impl Value {
    pub fn text(s: impl AsRef<str>) -> Self {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Text(_) => "text",
            Value::Boolean(_) => "boolean",
            Value::Timestamp(_) => "timestamp",
            Value::Duration(_) => "duration",
            Value::Missing => "missing",
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_timestamp(&self) -> Option<i64> {
        match self {
            Value::Timestamp(t) => Some(*t),
            _ => None,
        }
    }

    /// Text form used for pattern matching, concept keys and CSV export.
    /// Missing renders as the empty string.
    pub fn render(&self) -> String {
        match self {
            Value::Number(n) => format_number(*n),
            Value::Text(s) => s.to_string(),
            Value::Boolean(b) => b.to_string(),
            Value::Timestamp(t) => format_timestamp(*t),
            Value::Duration(d) => d.to_string(),
            Value::Missing => String::new(),
        }
    }

    /// Identity used by `count distinct`: numbers compare by bit pattern
    /// (with `-0.0` folded into `0.0`).
    pub fn distinct_key(&self) -> DistinctKey {
        match self {
            Value::Number(n) => {
                let n = if *n == 0.0 { 0.0 } else { *n };
                DistinctKey::Number(n.to_bits())
            }
            Value::Text(s) => DistinctKey::Text(s.clone()),
            Value::Boolean(b) => DistinctKey::Boolean(*b),
            Value::Timestamp(t) => DistinctKey::Timestamp(*t),
            Value::Duration(d) => DistinctKey::Duration(*d),
            Value::Missing => DistinctKey::Missing,
        }
    }

    /// Parses a raw delimited-file cell: empty is missing, numeric text is a
    /// number (except zero-padded codes such as `0389`), ISO-8601 dates and
    /// datetimes are timestamps, everything else is text.
    pub fn infer(raw: &str) -> Value {
        let s = raw.trim();
        if s.is_empty() {
            return Value::Missing;
        }
        if looks_numeric(s) {
            if let Ok(n) = s.parse::<f64>() {
                if n.is_finite() {
                    return Value::Number(n);
                }
            }
        }
        if s.as_bytes()[0].is_ascii_digit() {
            if let Some(t) = parse_timestamp(s) {
                return Value::Timestamp(t);
            }
        }
        Value::text(s)
    }
}

impl PartialEq for Value {
    /// Structural equality (not the query-language `=`): missing equals
    /// missing and numbers compare exactly.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a == b || (a.is_nan() && b.is_nan()),
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Boolean(a), Value::Boolean(b)) => a == b,
            (Value::Timestamp(a), Value::Timestamp(b)) => a == b,
            (Value::Duration(a), Value::Duration(b)) => a == b,
            (Value::Missing, Value::Missing) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Missing => f.write_str("missing"),
            Value::Duration(d) => write!(f, "{d} ms"),
            other => f.write_str(&other.render()),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Number(n) if n.is_finite() => serializer.serialize_f64(*n),
            Value::Number(_) | Value::Missing => serializer.serialize_none(),
            Value::Text(s) => serializer.serialize_str(s),
            Value::Boolean(b) => serializer.serialize_bool(*b),
            Value::Timestamp(t) => serializer.serialize_str(&format_timestamp(*t)),
            Value::Duration(d) => serializer.serialize_i64(*d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DistinctKey {
    Missing,
    Boolean(bool),
    Number(u64),
    Timestamp(i64),
    Duration(i64),
    Text(Arc<str>),
}

fn looks_numeric(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let bytes = digits.as_bytes();
    if bytes.is_empty() || !(bytes[0].is_ascii_digit() || bytes[0] == b'.') {
        return false;
    }
    // Zero-padded identifiers ("0389") stay text; "0" and "0.5" are numbers.
    if bytes.len() > 1 && bytes[0] == b'0' && bytes[1].is_ascii_digit() {
        return false;
    }
    bytes
        .iter()
        .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'-' | b'+'))
}

pub fn format_number(n: f64) -> String {
    if n.is_finite() && n.fract() == 0.0 && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

/// Parses ISO-8601 timestamps as UTC. Accepts date-only values (midnight),
/// `T` or space separators, fractional seconds, and `Z`/offset suffixes.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp_millis());
    }
    let body = s.strip_suffix('Z').unwrap_or(s);
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(body, fmt) {
            return Some(dt.and_utc().timestamp_millis());
        }
    }
    NaiveDate::parse_from_str(body, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp_millis())
}

pub fn format_timestamp(ms: i64) -> String {
    match DateTime::<Utc>::from_timestamp_millis(ms) {
        Some(dt) if ms % 1000 == 0 => dt.to_rfc3339_opts(SecondsFormat::Secs, true),
        Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Millis, true),
        None => ms.to_string(),
    }
}

/// Units accepted in duration literals and `as <unit>` conversions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Seconds,
    Minutes,
    Hours,
    Days,
    Weeks,
    Years,
}

impl TimeUnit {
    pub const ALL: [TimeUnit; 6] = [
        TimeUnit::Seconds,
        TimeUnit::Minutes,
        TimeUnit::Hours,
        TimeUnit::Days,
        TimeUnit::Weeks,
        TimeUnit::Years,
    ];

    /// Milliseconds per unit. A year is 365.25 days.
    pub fn millis(self) -> f64 {
        match self {
            TimeUnit::Seconds => MS_PER_SECOND as f64,
            TimeUnit::Minutes => MS_PER_MINUTE as f64,
            TimeUnit::Hours => MS_PER_HOUR as f64,
            TimeUnit::Days => MS_PER_DAY as f64,
            TimeUnit::Weeks => 7.0 * MS_PER_DAY as f64,
            TimeUnit::Years => 365.25 * MS_PER_DAY as f64,
        }
    }

    /// Recognizes the accepted spellings, case-insensitively.
    pub fn from_word(word: &str) -> Option<TimeUnit> {
        let w = word.to_ascii_lowercase();
        Some(match w.as_str() {
            "s" | "sec" | "secs" | "second" | "seconds" => TimeUnit::Seconds,
            "min" | "mins" | "minute" | "minutes" => TimeUnit::Minutes,
            "h" | "hr" | "hrs" | "hour" | "hours" => TimeUnit::Hours,
            "d" | "day" | "days" => TimeUnit::Days,
            "week" | "weeks" => TimeUnit::Weeks,
            "year" | "years" => TimeUnit::Years,
            _ => return None,
        })
    }

    pub fn plural(self) -> &'static str {
        match self {
            TimeUnit::Seconds => "seconds",
            TimeUnit::Minutes => "minutes",
            TimeUnit::Hours => "hours",
            TimeUnit::Days => "days",
            TimeUnit::Weeks => "weeks",
            TimeUnit::Years => "years",
        }
    }

    pub fn singular(self) -> &'static str {
        let p = self.plural();
        &p[..p.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
        )
    }
}

impl fmt::Display for BinaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueError {
    #[error("type mismatch: cannot apply '{op}' to {lhs} and {rhs}")]
    TypeMismatch {
        op: String,
        lhs: &'static str,
        rhs: &'static str,
    },
    #[error("'{op}' expects {expected}, found {found}")]
    Expected {
        op: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("unknown time unit '{0}'")]
    UnknownUnit(String),
}

fn mismatch(op: BinaryOp, lhs: &Value, rhs: &Value) -> ValueError {
    ValueError::TypeMismatch {
        op: op.symbol().to_string(),
        lhs: lhs.variant_name(),
        rhs: rhs.variant_name(),
    }
}

fn round_ms(x: f64) -> Option<i64> {
    x.is_finite().then(|| x.round() as i64)
}

/// Applies an arithmetic, comparison or boolean operator to two scalars.
///
/// Missing is absorbing; division by zero yields missing.
pub fn apply_scalar_op(op: BinaryOp, lhs: &Value, rhs: &Value) -> Result<Value, ValueError> {
    use Value::*;
    if lhs.is_missing() || rhs.is_missing() {
        return Ok(Missing);
    }
    if op.is_comparison() {
        return compare_values(op, lhs, rhs).map(Boolean);
    }
    let out = match (op, lhs, rhs) {
        (BinaryOp::And, Boolean(a), Boolean(b)) => Boolean(*a && *b),
        (BinaryOp::Or, Boolean(a), Boolean(b)) => Boolean(*a || *b),
        (BinaryOp::And | BinaryOp::Or, _, _) => return Err(mismatch(op, lhs, rhs)),

        (BinaryOp::Add, Number(a), Number(b)) => Number(a + b),
        (BinaryOp::Sub, Number(a), Number(b)) => Number(a - b),
        (BinaryOp::Mul, Number(a), Number(b)) => Number(a * b),
        (BinaryOp::Div, Number(_), Number(b)) if *b == 0.0 => Missing,
        (BinaryOp::Div, Number(a), Number(b)) => Number(a / b),
        (BinaryOp::Pow, Number(a), Number(b)) => Number(a.powf(*b)),

        (BinaryOp::Add, Timestamp(t), Duration(d)) | (BinaryOp::Add, Duration(d), Timestamp(t)) => {
            Timestamp(t + d)
        }
        (BinaryOp::Sub, Timestamp(t), Duration(d)) => Timestamp(t - d),
        (BinaryOp::Sub, Timestamp(a), Timestamp(b)) => Duration(a - b),
        (BinaryOp::Add, Duration(a), Duration(b)) => Duration(a + b),
        (BinaryOp::Sub, Duration(a), Duration(b)) => Duration(a - b),
        (BinaryOp::Mul, Duration(d), Number(n)) | (BinaryOp::Mul, Number(n), Duration(d)) => {
            round_ms(*d as f64 * n).map(Duration).unwrap_or(Missing)
        }
        (BinaryOp::Div, Duration(_), Number(n)) if *n == 0.0 => Missing,
        (BinaryOp::Div, Duration(d), Number(n)) => {
            round_ms(*d as f64 / n).map(Duration).unwrap_or(Missing)
        }
        (BinaryOp::Div, Duration(_), Duration(0)) => Missing,
        (BinaryOp::Div, Duration(a), Duration(b)) => Number(*a as f64 / *b as f64),
        _ => return Err(mismatch(op, lhs, rhs)),
    };
    Ok(out)
}

/// Query-language comparison. Equality between a number and a text value
/// compares the number's rendered text; ordering across variants is an error.
fn compare_values(op: BinaryOp, lhs: &Value, rhs: &Value) -> Result<bool, ValueError> {
    use Value::*;
    let ordering = match (lhs, rhs) {
        (Number(a), Number(b)) => a.partial_cmp(b),
        (Text(a), Text(b)) => Some(a.cmp(b)),
        (Timestamp(a), Timestamp(b)) => Some(a.cmp(b)),
        (Duration(a), Duration(b)) => Some(a.cmp(b)),
        (Boolean(a), Boolean(b)) if matches!(op, BinaryOp::Eq | BinaryOp::Ne) => Some(a.cmp(b)),
        (Number(_), Text(t)) | (Text(t), Number(_))
            if matches!(op, BinaryOp::Eq | BinaryOp::Ne) =>
        {
            let n = if let Number(n) = lhs { *n } else { rhs.as_number().unwrap_or(f64::NAN) };
            let equal = format_number(n) == **t;
            return Ok(equal == (op == BinaryOp::Eq));
        }
        _ => return Err(mismatch(op, lhs, rhs)),
    };
    let Some(ord) = ordering else {
        // NaN never compares true except through `!=`.
        return Ok(op == BinaryOp::Ne);
    };
    Ok(match op {
        BinaryOp::Eq => ord == Ordering::Equal,
        BinaryOp::Ne => ord != Ordering::Equal,
        BinaryOp::Lt => ord == Ordering::Less,
        BinaryOp::Le => ord != Ordering::Greater,
        BinaryOp::Gt => ord == Ordering::Greater,
        BinaryOp::Ge => ord != Ordering::Less,
        _ => unreachable!("not a comparison"),
    })
}

/// Boolean negation; missing stays missing.
pub fn apply_not(v: &Value) -> Result<Value, ValueError> {
    match v {
        Value::Missing => Ok(Value::Missing),
        Value::Boolean(b) => Ok(Value::Boolean(!b)),
        other => Err(ValueError::Expected {
            op: "not".into(),
            expected: "boolean",
            found: other.variant_name(),
        }),
    }
}

/// Arithmetic negation of numbers and durations.
pub fn apply_neg(v: &Value) -> Result<Value, ValueError> {
    match v {
        Value::Missing => Ok(Value::Missing),
        Value::Number(n) => Ok(Value::Number(-n)),
        Value::Duration(d) => Ok(Value::Duration(-d)),
        other => Err(ValueError::Expected {
            op: "-".into(),
            expected: "number or duration",
            found: other.variant_name(),
        }),
    }
}

/// Expresses a duration in the given unit as a float.
pub fn convert_duration(v: &Value, unit: TimeUnit) -> Result<Value, ValueError> {
    match v {
        Value::Missing => Ok(Value::Missing),
        Value::Duration(d) => Ok(Value::Number(*d as f64 / unit.millis())),
        other => Err(ValueError::Expected {
            op: format!("as {}", unit.plural()),
            expected: "duration",
            found: other.variant_name(),
        }),
    }
}

/// Text-unit variant of [`convert_duration`].
pub fn convert_duration_named(v: &Value, unit: &str) -> Result<Value, ValueError> {
    let unit = TimeUnit::from_word(unit).ok_or_else(|| ValueError::UnknownUnit(unit.to_string()))?;
    convert_duration(v, unit)
}
