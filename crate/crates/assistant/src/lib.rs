//! LLM assistant for TempoQL: generate, explain and fix flows.
//!
//! The model only ever sees the redacted dataset specification and the
//! results of `search_concepts` calls against the catalog; row data never
//! leaves the process.

mod chat;
mod fences;
mod flow;
mod prompt;
mod provider;

pub use chat::{ChatRequest, ChatTurn, Role, ToolCall, ToolDefinition};
pub use fences::extract_code_blocks;
pub use flow::{run_tool_loop, AssistantError, AssistantOutcome, Candidate, CandidateError, Flow};
pub use prompt::{build_system_prompt, flow_prompt, render_spec};
pub use provider::{
    HttpProvider, Provider, ProviderConfig, ProviderError, ProviderKind, ScriptedProvider,
};

/// Name of the single tool offered to the model.
pub const SEARCH_TOOL: &str = "search_concepts";
