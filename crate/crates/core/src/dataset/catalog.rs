use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::matcher::TextMatcher;
use super::resolve::attribute_values;
use super::spec::TableKind;
use super::{Dataset, DatasetError};
use crate::lang::ElementKind;

pub const SEARCH_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CatalogEntry {
    pub name: String,
    pub concept_id: Option<String>,
    pub scope: String,
    pub element_kind: ElementKind,
    pub occurrence_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub entries: Vec<CatalogEntry>,
    pub truncated: bool,
}

pub(crate) fn element_kind(k: TableKind) -> ElementKind {
    match k {
        TableKind::Attributes => ElementKind::Attribute,
        TableKind::Event => ElementKind::Event,
        TableKind::Interval => ElementKind::Interval,
    }
}

/// One entry per vocabulary concept in a scope that has concept tables
/// (plus ids seen in data but absent from the vocabulary), one per declared
/// attribute, and one per literal type value. Sorted by (scope, name).
pub(crate) fn build_catalog(ds: &Dataset) -> Vec<CatalogEntry> {
    // (name, concept id, scope) → (kind, count)
    let mut entries: BTreeMap<(String, Option<String>, String), (ElementKind, u64)> = BTreeMap::new();
    let mut add = |name: &str, id: Option<&str>, scope: &str, kind: ElementKind, n: u64| {
        let e = entries
            .entry((name.to_string(), id.map(str::to_string), scope.to_string()))
            .or_insert((kind, 0));
        e.1 += n;
    };

    let mut concept_scopes: HashMap<&str, ElementKind> = HashMap::new();
    let mut concept_counts: HashMap<(&str, &str), u64> = HashMap::new();
    for t in &ds.tables {
        let scope = t.spec.scope.as_str();
        if t.kind() == TableKind::Attributes {
            for name in t.spec.attributes.keys() {
                let n = attribute_values(t, name, None).iter().filter(|(_, v)| !v.is_missing()).count();
                add(name, None, scope, ElementKind::Attribute, n as u64);
            }
            continue;
        }
        let mut per_code = vec![0u64; t.type_keys.len()];
        for &c in &t.type_codes {
            per_code[c as usize] += 1;
        }
        if t.spec.concept_id_field.is_some() {
            concept_scopes.entry(scope).or_insert(element_kind(t.kind()));
            for (key, n) in t.type_keys.iter().zip(per_code) {
                *concept_counts.entry((scope, key)).or_default() += n;
            }
        } else {
            for (key, n) in t.type_keys.iter().zip(per_code) {
                add(key, None, scope, element_kind(t.kind()), n);
            }
        }
    }
    for (scope, kind) in &concept_scopes {
        let vocab = ds.vocabulary.get(*scope);
        if let Some(vocab) = vocab {
            for (id, name) in vocab {
                let n = concept_counts.get(&(*scope, id.as_str())).copied().unwrap_or(0);
                add(name, Some(id), scope, *kind, n);
            }
        }
        for ((s, id), n) in &concept_counts {
            if s == scope && !vocab.is_some_and(|v| v.contains_key(*id)) {
                add(id, Some(id), scope, *kind, *n);
            }
        }
    }

    let mut out: Vec<CatalogEntry> = entries
        .into_iter()
        .map(|((name, concept_id, scope), (element_kind, occurrence_count))| CatalogEntry {
            name,
            concept_id,
            scope,
            element_kind,
            occurrence_count,
        })
        .collect();
    out.sort_by(|a, b| (&a.scope, &a.name, &a.concept_id).cmp(&(&b.scope, &b.name, &b.concept_id)));
    out
}

/// Case-insensitive substring search over concept names (or a regex when
/// the query is written `/pattern/flags`), optionally limited to one scope.
/// Results are ordered by occurrence count, then name.
pub fn search_concepts(catalog: &[CatalogEntry], query: &str, scope: Option<&str>) -> Result<SearchResult, DatasetError> {
    let m = TextMatcher::search(query)?;
    let mut hits: Vec<&CatalogEntry> = catalog
        .iter()
        .filter(|e| scope.is_none_or(|s| e.scope == s))
        .filter(|e| m.is_match(&e.name))
        .collect();
    hits.sort_by(|a, b| {
        b.occurrence_count
            .cmp(&a.occurrence_count)
            .then_with(|| a.name.cmp(&b.name))
            .then_with(|| a.scope.cmp(&b.scope))
    });
    let truncated = hits.len() > SEARCH_LIMIT;
    Ok(SearchResult { entries: hits.into_iter().take(SEARCH_LIMIT).cloned().collect(), truncated })
}
