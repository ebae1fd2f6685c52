use serde::Serialize;
use tempoql::dataset::{DatasetSpec, TableKind, VocabularyScope};

use crate::flow::Flow;

const BASE: &str = include_str!("../prompts/base.txt");
const GENERATE: &str = include_str!("../prompts/generate.txt");
const EXPLAIN: &str = include_str!("../prompts/explain.txt");
const FIX: &str = include_str!("../prompts/fix.txt");

#[derive(Serialize)]
struct TableView<'a> {
    source: &'a str,
    scope: &'a str,
    #[serde(rename = "type")]
    kind: &'static str,
    id_field: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start_time_field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    end_time_field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    concept_id_field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    type_field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    default_value_field: Option<&'a str>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    attributes: Vec<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comment: Option<&'a str>,
}

#[derive(Serialize)]
struct VocabularyView<'a> {
    source: &'a str,
    concept_id_field: &'a str,
    concept_name_field: &'a str,
    scopes: Vec<&'a str>,
}

#[derive(Serialize)]
struct SpecView<'a> {
    scopes: Vec<&'a str>,
    tables: Vec<TableView<'a>>,
    vocabularies: Vec<VocabularyView<'a>>,
}

/// Schema-only rendering of a dataset specification: table and field
/// names, scopes, attribute names and comments. Built from the spec alone,
/// so it cannot contain row values.
pub fn render_spec(spec: &DatasetSpec) -> String {
    let mut scopes: Vec<&str> = spec.tables.iter().map(|t| t.scope.as_str()).collect();
    scopes.sort_unstable();
    scopes.dedup();
    let view = SpecView {
        scopes,
        tables: spec
            .tables
            .iter()
            .map(|t| TableView {
                source: &t.source,
                scope: &t.scope,
                kind: match t.kind {
                    TableKind::Attributes => "attributes",
                    TableKind::Event => "event",
                    TableKind::Interval => "interval",
                },
                id_field: &t.id_field,
                time_field: t.time_field.as_deref(),
                start_time_field: t.start_time_field.as_deref(),
                end_time_field: t.end_time_field.as_deref(),
                concept_id_field: t.concept_id_field.as_deref(),
                type_field: t.type_field.as_deref(),
                default_value_field: t.default_value_field.as_deref(),
                attributes: t.attributes.keys().map(String::as_str).collect(),
                comment: t.comment.as_deref(),
            })
            .collect(),
        vocabularies: spec
            .vocabularies
            .iter()
            .map(|v| VocabularyView {
                source: &v.source,
                concept_id_field: &v.concept_id_field,
                concept_name_field: &v.concept_name_field,
                scopes: match &v.scope {
                    VocabularyScope::Fixed(s) => vec![s.as_str()],
                    VocabularyScope::Field { scopes, .. } => scopes.iter().map(String::as_str).collect(),
                },
            })
            .collect(),
    };
    serde_json::to_string_pretty(&view).expect("spec view serializes")
}

pub fn build_system_prompt(spec: &DatasetSpec) -> String {
    BASE.replace("<DATASET_INFO>", &render_spec(spec))
}

/// The user turn that opens a flow.
pub fn flow_prompt(flow: &Flow) -> String {
    match flow {
        Flow::Generate { instruction } => GENERATE.replace("<INSTRUCTION>", instruction.trim()),
        Flow::Explain { query } => format!("{EXPLAIN}\nQuery:\n```tempoql\n{}\n```\n", query.trim()),
        Flow::Fix { query, error } => {
            format!("{FIX}\nQuery:\n```tempoql\n{}\n```\n\nError:\n```\n{}\n```\n", query.trim(), error.trim())
        }
    }
}
