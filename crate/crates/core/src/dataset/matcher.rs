use regex::Regex;

use super::DatasetError;
use crate::lang::regex_subset;
use crate::lang::{CriterionOperand, Relation};

/// A compiled element-query predicate over concept names, ids or scopes.
///
/// Text operands compare case-insensitively; regex operands honour their
/// own flags. `contains` searches anywhere, `startswith`/`endswith` anchor
/// one side and `matches` anchors both.
#[derive(Debug, Clone)]
pub enum TextMatcher {
    Exact(Vec<String>),
    Contains(String),
    Prefix(String),
    Suffix(String),
    Regex(Regex),
}

impl TextMatcher {
    pub fn new(relation: Relation, operand: &CriterionOperand) -> Result<TextMatcher, DatasetError> {
        let lower = |s: &str| s.to_lowercase();
        Ok(match (relation, operand) {
            (Relation::Equals | Relation::Matches, CriterionOperand::Text(t)) => TextMatcher::Exact(vec![lower(t)]),
            (_, CriterionOperand::List(items)) => TextMatcher::Exact(items.iter().map(|s| lower(s)).collect()),
            (Relation::In, CriterionOperand::Text(t)) => TextMatcher::Exact(vec![lower(t)]),
            (Relation::Contains, CriterionOperand::Text(t)) => TextMatcher::Contains(lower(t)),
            (Relation::StartsWith, CriterionOperand::Text(t)) => TextMatcher::Prefix(lower(t)),
            (Relation::EndsWith, CriterionOperand::Text(t)) => TextMatcher::Suffix(lower(t)),
            (rel, CriterionOperand::Regex(r)) => {
                let pattern = match rel {
                    Relation::StartsWith => format!("^(?:{})", r.pattern),
                    Relation::EndsWith => format!("(?:{})$", r.pattern),
                    Relation::Matches | Relation::Equals | Relation::In => format!("^(?:{})$", r.pattern),
                    Relation::Contains => r.pattern.clone(),
                };
                regex_subset::validate(&r.pattern).map_err(|(m, _)| DatasetError::Regex(m))?;
                let re = regex::RegexBuilder::new(&pattern)
                    .case_insensitive(r.case_insensitive)
                    .build()
                    .map_err(|e| DatasetError::Regex(e.to_string()))?;
                TextMatcher::Regex(re)
            }
        })
    }

    /// Builds the `/pattern/flags` or plain-substring matcher used by concept search.
    pub fn search(query: &str) -> Result<TextMatcher, DatasetError> {
        if let Some((pattern, flags)) = split_regex_literal(query) {
            if let Some(bad) = flags.chars().find(|c| *c != 'i') {
                return Err(DatasetError::Regex(format!("unsupported flag '{bad}'")));
            }
            let ci = flags.contains('i');
            let re = regex_subset::compile(pattern, ci).map_err(|(m, _)| DatasetError::Regex(m))?;
            Ok(TextMatcher::Regex(re))
        } else {
            Ok(TextMatcher::Contains(query.to_lowercase()))
        }
    }

    pub fn is_match(&self, s: &str) -> bool {
        match self {
            TextMatcher::Regex(re) => re.is_match(s),
            TextMatcher::Exact(items) => {
                let l = s.to_lowercase();
                items.iter().any(|i| *i == l)
            }
            TextMatcher::Contains(n) => s.to_lowercase().contains(n.as_str()),
            TextMatcher::Prefix(n) => s.to_lowercase().starts_with(n.as_str()),
            TextMatcher::Suffix(n) => s.to_lowercase().ends_with(n.as_str()),
        }
    }
}

fn split_regex_literal(q: &str) -> Option<(&str, &str)> {
    let q = q.trim();
    let rest = q.strip_prefix('/')?;
    let close = rest.rfind('/')?;
    let flags = &rest[close + 1..];
    if flags.chars().all(|c| c.is_ascii_alphabetic()) {
        Some((&rest[..close], flags))
    } else {
        None
    }
}
