use serde::Serialize;

use super::Span;
use crate::value::{BinaryOp, TimeUnit, Value};

/// A parsed expression. Equality is structural and ignores spans.
#[derive(Debug, Clone, Serialize)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Direct children in source order.
    pub fn children(&self) -> Vec<&Expr> {
        use ExprKind::*;
        match &self.kind {
            Literal(_) | Variable(_) | Element(_) | Marker(_) | Duration { .. } | Regex(_) => vec![],
            Binary { lhs, rhs, .. } => vec![lhs, rhs],
            Unary { operand, .. } => vec![operand],
            Case { branches, otherwise } => {
                let mut v: Vec<&Expr> = branches.iter().flat_map(|(w, t)| [w, t]).collect();
                v.extend(otherwise.as_deref());
                v
            }
            Between { expr, low, high } => vec![expr, low, high],
            Pattern { expr, .. } => vec![expr],
            InList { expr, items } => std::iter::once(&**expr).chain(items).collect(),
            Call { args, .. } => args.iter().collect(),
            Aggregation(agg) => agg.children(),
            Clause { target, clause } => {
                let mut v = vec![&**target];
                match clause {
                    ClauseKind::Where(e) | ClauseKind::Carry(e) => v.push(e),
                    ClauseKind::Impute(ImputeStrategy::Expr(e)) => v.push(e),
                    ClauseKind::Impute(_) | ClauseKind::Cut { .. } => {}
                }
                v
            }
            With { value, body, .. } => vec![body, value],
            AsUnit { expr, .. } => vec![expr],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum ExprKind {
    Literal(Value),
    Variable(String),
    Element(ElementQuery),
    Marker(Marker),
    Duration { amount: f64, unit: TimeUnit },
    /// A `/pattern/flags` literal used as a function argument.
    Regex(RegexLit),
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Case { branches: Vec<(Expr, Expr)>, otherwise: Option<Box<Expr>> },
    Between { expr: Box<Expr>, low: Box<Expr>, high: Box<Expr> },
    Pattern { op: PatternOp, expr: Box<Expr>, pattern: PatternOperand },
    InList { expr: Box<Expr>, items: Vec<Expr> },
    Call { name: String, args: Vec<Expr> },
    Aggregation(Box<Aggregation>),
    Clause { target: Box<Expr>, clause: ClauseKind },
    With { name: String, value: Box<Expr>, body: Box<Expr> },
    AsUnit { expr: Box<Expr>, unit: TimeUnit },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    Now,
    MinTime,
    MaxTime,
    Value,
}

impl Marker {
    pub fn text(self) -> &'static str {
        match self {
            Marker::Now => "#now",
            Marker::MinTime => "#mintime",
            Marker::MaxTime => "#maxtime",
            Marker::Value => "#value",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternOp {
    Contains,
    Matches,
    StartsWith,
    EndsWith,
}

impl PatternOp {
    pub fn keyword(self) -> &'static str {
        match self {
            PatternOp::Contains => "contains",
            PatternOp::Matches => "matches",
            PatternOp::StartsWith => "startswith",
            PatternOp::EndsWith => "endswith",
        }
    }

    pub fn from_keyword(w: &str) -> Option<PatternOp> {
        Some(match w.to_ascii_lowercase().as_str() {
            "contains" => PatternOp::Contains,
            "matches" => PatternOp::Matches,
            "startswith" => PatternOp::StartsWith,
            "endswith" => PatternOp::EndsWith,
            _ => return None,
        })
    }
}

/// A `/pattern/flags` literal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct RegexLit {
    pub pattern: String,
    pub case_insensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternOperand {
    Regex(RegexLit),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    Where(Box<Expr>),
    Impute(ImputeStrategy),
    Carry(Box<Expr>),
    Cut { edges: Vec<f64>, labels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    Mean,
    Median,
    Expr(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AggFunc {
    Sum,
    Mean,
    Median,
    Min,
    Max,
    First,
    Last,
    Any,
    All,
    AllNonnull,
    Exists,
    ExistsNonnull,
    Count,
    CountDistinct,
    CountDistinctNonnull,
    CountNonnull,
    Integral,
}

impl AggFunc {
    pub const ALL: [AggFunc; 17] = [
        AggFunc::Sum,
        AggFunc::Mean,
        AggFunc::Median,
        AggFunc::Min,
        AggFunc::Max,
        AggFunc::First,
        AggFunc::Last,
        AggFunc::Any,
        AggFunc::All,
        AggFunc::AllNonnull,
        AggFunc::Exists,
        AggFunc::ExistsNonnull,
        AggFunc::Count,
        AggFunc::CountDistinct,
        AggFunc::CountDistinctNonnull,
        AggFunc::CountNonnull,
        AggFunc::Integral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Sum => "sum",
            AggFunc::Mean => "mean",
            AggFunc::Median => "median",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::First => "first",
            AggFunc::Last => "last",
            AggFunc::Any => "any",
            AggFunc::All => "all",
            AggFunc::AllNonnull => "all nonnull",
            AggFunc::Exists => "exists",
            AggFunc::ExistsNonnull => "exists nonnull",
            AggFunc::Count => "count",
            AggFunc::CountDistinct => "count distinct",
            AggFunc::CountDistinctNonnull => "count distinct nonnull",
            AggFunc::CountNonnull => "count nonnull",
            AggFunc::Integral => "integral",
        }
    }

    /// Single-word heads; multi-word forms are built by the parser.
    pub fn from_head(word: &str) -> Option<AggFunc> {
        Some(match word.to_ascii_lowercase().as_str() {
            "sum" => AggFunc::Sum,
            "mean" => AggFunc::Mean,
            "median" => AggFunc::Median,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            "first" => AggFunc::First,
            "last" => AggFunc::Last,
            "any" => AggFunc::Any,
            "all" => AggFunc::All,
            "exists" => AggFunc::Exists,
            "count" => AggFunc::Count,
            "integral" => AggFunc::Integral,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    Rate,
    Amount,
    Duration,
    Value,
}

impl IntervalMode {
    pub const ALL: [IntervalMode; 4] = [
        IntervalMode::Rate,
        IntervalMode::Amount,
        IntervalMode::Duration,
        IntervalMode::Value,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            IntervalMode::Rate => "rate",
            IntervalMode::Amount => "amount",
            IntervalMode::Duration => "duration",
            IntervalMode::Value => "value",
        }
    }

    pub fn from_keyword(w: &str) -> Option<IntervalMode> {
        Some(match w.to_ascii_lowercase().as_str() {
            "rate" => IntervalMode::Rate,
            "amount" => IntervalMode::Amount,
            "duration" => IntervalMode::Duration,
            "value" => IntervalMode::Value,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregation {
    pub func: AggFunc,
    pub mode: Option<IntervalMode>,
    pub target: Expr,
    pub bounds: Option<Bounds>,
    pub timestep: Option<Timestep>,
}

impl Aggregation {
    fn children(&self) -> Vec<&Expr> {
        let mut v = vec![&self.target];
        match &self.bounds {
            Some(Bounds::FromTo(a, b)) => v.extend([a, b]),
            Some(Bounds::Before(a) | Bounds::After(a) | Bounds::At(a)) => v.push(a),
            None => {}
        }
        match &self.timestep {
            Some(Timestep::Every { period, from, to }) => {
                v.push(period);
                v.extend(from.iter().chain(to.iter()));
            }
            Some(Timestep::AtEvery { event, from, to }) => {
                v.push(event);
                v.extend(from.iter().chain(to.iter()));
            }
            Some(Timestep::AtList(_)) | None => {}
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bounds {
    FromTo(Expr, Expr),
    Before(Expr),
    After(Expr),
    At(Expr),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Timestep {
    Every { period: Expr, from: Option<Expr>, to: Option<Expr> },
    AtEvery { event: Expr, from: Option<Expr>, to: Option<Expr> },
    /// Explicit timestamps, kept with their source text.
    AtList(Vec<(String, i64)>),
}

/// `{…}` data element query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ElementQuery {
    pub criteria: Vec<Criterion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Name,
    Id,
    Scope,
    Type,
    Value,
}

impl Field {
    pub fn keyword(self) -> &'static str {
        match self {
            Field::Name => "name",
            Field::Id => "id",
            Field::Scope => "scope",
            Field::Type => "type",
            Field::Value => "value",
        }
    }

    pub fn from_keyword(w: &str) -> Option<Field> {
        Some(match w.to_ascii_lowercase().as_str() {
            "name" => Field::Name,
            "id" => Field::Id,
            "scope" => Field::Scope,
            "type" => Field::Type,
            "value" => Field::Value,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equals,
    In,
    Contains,
    Matches,
    StartsWith,
    EndsWith,
}

impl Relation {
    pub fn keyword(self) -> &'static str {
        match self {
            Relation::Equals => "=",
            Relation::In => "in",
            Relation::Contains => "contains",
            Relation::Matches => "matches",
            Relation::StartsWith => "startswith",
            Relation::EndsWith => "endswith",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionOperand {
    Text(String),
    List(Vec<String>),
    Regex(RegexLit),
}

#[derive(Debug, Clone, Serialize)]
pub struct Criterion {
    pub field: Field,
    pub relation: Relation,
    pub operand: CriterionOperand,
    pub span: Span,
}

impl PartialEq for Criterion {
    fn eq(&self, o: &Self) -> bool {
        self.field == o.field && self.relation == o.relation && self.operand == o.operand
    }
}
impl Eq for Criterion {}

impl std::hash::Hash for Criterion {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        (self.field, self.relation, &self.operand).hash(state)
    }
}

/// Kind requested through a `type = …` criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Attribute,
    Event,
    Interval,
}

impl ElementKind {
    pub fn from_word(w: &str) -> Option<ElementKind> {
        Some(match w.to_ascii_lowercase().as_str() {
            "attribute" | "attributes" => ElementKind::Attribute,
            "event" | "events" => ElementKind::Event,
            "interval" | "intervals" => ElementKind::Interval,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            ElementKind::Attribute => "attribute",
            ElementKind::Event => "event",
            ElementKind::Interval => "interval",
        }
    }
}
