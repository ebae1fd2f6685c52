//! The query language: lexer, parser, AST, canonical printer and editor
//! helpers (completion, subquery extraction).

mod ast;
mod complete;
mod element;
mod lexer;
mod parser;
pub mod regex_subset;
mod subqueries;
mod unparse;

use std::fmt;

use serde::Serialize;

pub use ast::*;
pub use complete::{complete, CompletionEntry, Suggestion, SuggestionKind};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;
pub use subqueries::{extract_subqueries, Subquery, SubqueryKind};
pub use unparse::unparse;

/// Byte offsets `[start, end)` into the query text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseError {
    pub message: String,
    pub span: Span,
    pub expected: Vec<String>,
    pub hint: Option<String>,
}

impl ParseError {
    pub(crate) fn new(message: impl Into<String>, span: Span) -> Self {
        ParseError {
            message: message.into(),
            span,
            expected: Vec::new(),
            hint: None,
        }
    }

    pub(crate) fn with_hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = Some(hint.into());
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}..{}", self.message, self.span.start, self.span.end)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        if let Some(h) = &self.hint {
            write!(f, "; hint: {h}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

/// Reserved words, lowercase.
pub const KEYWORDS: &[&str] = &[
    "with", "as", "where", "impute", "carry", "cut", "bins", "named", "or", "and", "not",
    "between", "contains", "matches", "startswith", "endswith", "in", "case", "when", "then",
    "else", "end", "from", "to", "before", "after", "at", "every", "distinct", "nonnull", "true",
    "false",
];

/// Aggregation function names as written, including multi-word forms.
pub const AGGREGATION_FUNCTIONS: &[&str] = &[
    "sum",
    "mean",
    "median",
    "min",
    "max",
    "first",
    "last",
    "any",
    "all",
    "all nonnull",
    "exists",
    "exists nonnull",
    "count",
    "count distinct",
    "count distinct nonnull",
    "count nonnull",
    "integral",
];

pub const BUILTIN_FUNCTIONS: &[&str] = &[
    "time", "type", "start", "end", "starttime", "endtime", "duration", "intervals", "union",
    "assign", "extract", "abs", "max", "min",
];

pub const INTERVAL_MODES: &[&str] = &["rate", "amount", "duration", "value"];

pub const MARKERS: &[&str] = &["#now", "#mintime", "#maxtime", "#value"];
