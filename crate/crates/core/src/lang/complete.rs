//! Editor completion.

use serde::Serialize;

use super::parser::expected_at_end;
use super::{Span, AGGREGATION_FUNCTIONS, BUILTIN_FUNCTIONS, KEYWORDS, MARKERS};
use crate::value::TimeUnit;

const MAX_SUGGESTIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionKind {
    Keyword,
    Aggregation,
    Function,
    Marker,
    Unit,
    Punctuation,
    Concept,
    Scope,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Suggestion {
    pub text: String,
    pub kind: SuggestionKind,
    /// Byte range of the text the suggestion replaces.
    pub replace: Span,
}

/// A catalog name offered inside `{…}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionEntry {
    pub name: String,
    pub scope: String,
    pub count: u64,
}

/// Suggestions for the text before `cursor`.
pub fn complete(text: &str, cursor: usize, catalog: &[CompletionEntry]) -> Vec<Suggestion> {
    let mut cursor = cursor.min(text.len());
    while !text.is_char_boundary(cursor) {
        cursor -= 1;
    }
    let before = &text[..cursor];
    match open_brace(before) {
        Some(open) => complete_element(before, open + 1, catalog),
        None => complete_keyword(before),
    }
}

/// Offset of an unclosed `{`, ignoring quoted text.
fn open_brace(s: &str) -> Option<usize> {
    let mut open = None;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '{' if open.is_none() => open = Some(i),
            '}' => open = None,
            _ => {}
        }
    }
    open
}

fn complete_element(before: &str, body_start: usize, catalog: &[CompletionEntry]) -> Vec<Suggestion> {
    let body = &before[body_start..];
    let seg_start = body.rfind(';').map_or(body_start, |i| body_start + i + 1);
    let segment = &before[seg_start..];
    let (want_scope, partial_start) = match segment.find('=') {
        Some(eq) => {
            let field = segment[..eq].trim().to_ascii_lowercase();
            match field.as_str() {
                "scope" => (true, seg_start + eq + 1),
                "name" => (false, seg_start + eq + 1),
                _ => return Vec::new(),
            }
        }
        None => (false, seg_start),
    };
    let raw = &before[partial_start..];
    let trimmed = raw.trim_start();
    let mut start = partial_start + (raw.len() - trimmed.len());
    let mut partial = trimmed;
    if let Some(rest) = partial.strip_prefix(['\'', '"']) {
        partial = rest;
        start += 1;
    }
    let needle = partial.to_lowercase();
    let replace = Span::new(start, before.len());

    let mut items: Vec<(u64, String)> = Vec::new();
    if want_scope {
        let mut scopes: std::collections::BTreeMap<&str, u64> = Default::default();
        for e in catalog {
            *scopes.entry(e.scope.as_str()).or_default() += e.count;
        }
        items.extend(scopes.into_iter().map(|(s, c)| (c, s.to_string())));
    } else {
        items.extend(catalog.iter().map(|e| (e.count, e.name.clone())));
    }
    items.retain(|(_, n)| n.to_lowercase().starts_with(&needle));
    items.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    items.dedup_by(|a, b| a.1 == b.1);
    items
        .into_iter()
        .take(MAX_SUGGESTIONS)
        .map(|(_, text)| Suggestion {
            text,
            kind: if want_scope { SuggestionKind::Scope } else { SuggestionKind::Concept },
            replace,
        })
        .collect()
}

fn complete_keyword(before: &str) -> Vec<Suggestion> {
    let word_start = before
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_alphanumeric() || *c == '_' || *c == '#')
        .last()
        .map_or(before.len(), |(i, _)| i);
    let word = before[word_start..].to_ascii_lowercase();
    // A number being typed is not a completion target.
    if word.starts_with(|c: char| c.is_ascii_digit()) {
        return Vec::new();
    }
    let expected = expected_at_end(&before[..word_start]);
    let replace = Span::new(word_start, before.len());

    let mut out: Vec<Suggestion> = Vec::new();
    let mut push = |text: &str, kind| {
        if text.starts_with(word.as_str()) && !out.iter().any(|s: &Suggestion| s.text == text) {
            out.push(Suggestion { text: text.to_string(), kind, replace });
        }
    };
    for e in &expected {
        let e = e.as_str();
        if e == "time unit" {
            for u in TimeUnit::ALL {
                push(u.plural(), SuggestionKind::Unit);
            }
        } else if AGGREGATION_FUNCTIONS.contains(&e) {
            push(e, SuggestionKind::Aggregation);
        } else if BUILTIN_FUNCTIONS.contains(&e) {
            push(e, SuggestionKind::Function);
        } else if MARKERS.contains(&e) {
            push(e, SuggestionKind::Marker);
        } else if KEYWORDS.contains(&e) || super::INTERVAL_MODES.contains(&e) || e == "mean" || e == "median" || e == "inf" {
            push(e, SuggestionKind::Keyword);
        } else if e.chars().all(|c| !c.is_alphanumeric() && c != ' ') && word.is_empty() {
            push(e, SuggestionKind::Punctuation);
        }
    }
    out.sort_by(|a, b| a.kind.cmp(&b.kind).then_with(|| a.text.cmp(&b.text)));
    out.truncate(MAX_SUGGESTIONS);
    out
}
