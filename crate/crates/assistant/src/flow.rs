use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};
use tempoql::dataset::{search_concepts, CatalogEntry, DatasetSpec};
use tempoql::lang::{parse, Span};
use thiserror::Error;

use crate::chat::{ChatRequest, ChatTurn, Role, ToolCall, ToolDefinition};
use crate::fences::extract_code_blocks;
use crate::prompt::{build_system_prompt, flow_prompt};
use crate::provider::{Provider, ProviderError};
use crate::SEARCH_TOOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "flow", rename_all = "snake_case")]
pub enum Flow {
    Generate { instruction: String },
    Explain { query: String },
    Fix { query: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateError {
    pub message: String,
    pub span: Span,
}

/// A query proposed by the model, checked by the parser.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub text: String,
    pub valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<CandidateError>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssistantOutcome {
    pub queries: Vec<Candidate>,
    pub prose: String,
    pub transcript: Vec<ChatTurn>,
    pub tool_call_count: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AssistantError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

fn call_once_more(provider: &dyn Provider, request: &ChatRequest) -> Result<ChatTurn, ProviderError> {
    match provider.complete(request) {
        Err(e) if e.is_transient() => provider.complete(request),
        other => other,
    }
}

fn search(call: &ToolCall, catalog: &[CatalogEntry]) -> Json {
    if call.name != SEARCH_TOOL {
        return json!({"error": format!("unknown function '{}'", call.name)});
    }
    let args = match &call.arguments {
        Json::String(s) => serde_json::from_str(s).unwrap_or(Json::Null),
        other => other.clone(),
    };
    let Some(query) = args.get("query").and_then(Json::as_str) else {
        return json!({"error": "missing string argument 'query'"});
    };
    let scope = args.get("scope").and_then(Json::as_str).filter(|s| !s.is_empty());
    match search_concepts(catalog, query, scope) {
        Ok(r) => json!({
            "results": r.entries.iter().map(|e| json!({
                "name": e.name, "id": e.concept_id, "scope": e.scope, "count": e.occurrence_count,
            })).collect::<Vec<_>>(),
            "truncated": r.truncated,
        }),
        Err(e) => json!({"error": e.to_string()}),
    }
}

fn candidate(text: String) -> Candidate {
    match parse(&text) {
        Ok(_) => Candidate { text, valid: true, error: None },
        Err(e) => Candidate { text, valid: false, error: Some(CandidateError { message: e.message, span: e.span }) },
    }
}

/// Runs one assistant session: the model may call `search_concepts` any
/// number of times per turn, for at most `max_iterations` model calls.
pub fn run_tool_loop(
    flow: &Flow,
    spec: &DatasetSpec,
    catalog: &[CatalogEntry],
    provider: &dyn Provider,
    model: &str,
    max_iterations: usize,
) -> Result<AssistantOutcome, AssistantError> {
    let mut transcript = vec![ChatTurn::system(build_system_prompt(spec)), ChatTurn::user(flow_prompt(flow))];
    let tools = vec![ToolDefinition::search_concepts()];
    let mut tool_call_count = 0;
    let mut diagnostics = Vec::new();
    let mut calls_made = 0;
    loop {
        if calls_made == max_iterations {
            diagnostics.push(format!(
                "stopped after {max_iterations} model calls while the model was still requesting {SEARCH_TOOL}"
            ));
            break;
        }
        calls_made += 1;
        let request = ChatRequest { model: model.to_string(), messages: transcript.clone(), tools: tools.clone() };
        let mut turn = call_once_more(provider, &request)?;
        if turn.tool_calls.is_empty() {
            transcript.push(turn);
            break;
        }
        for (i, c) in turn.tool_calls.iter_mut().enumerate() {
            if c.id.is_empty() {
                c.id = format!("call_{calls_made}_{i}");
            }
        }
        let results: Vec<ChatTurn> =
            turn.tool_calls.iter().map(|c| ChatTurn::tool(&c.id, search(c, catalog).to_string())).collect();
        tool_call_count += results.len();
        transcript.push(turn);
        transcript.extend(results);
    }

    let replies: Vec<&ChatTurn> = transcript.iter().filter(|t| t.role == Role::Assistant).collect();
    let queries = replies.iter().flat_map(|t| extract_code_blocks(&t.content)).map(candidate).collect();
    let prose = replies.iter().rev().find(|t| !t.content.trim().is_empty()).map_or(String::new(), |t| t.content.clone());
    Ok(AssistantOutcome { queries, prose, transcript, tool_call_count, diagnostics })
}
