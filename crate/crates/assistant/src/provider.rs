use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::chat::{ChatRequest, ChatTurn, Role, ToolCall};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Connection, timeout or server-side failure; worth one retry.
    #[error("provider unreachable: {0}")]
    Transport(String),
    #[error("provider rejected the request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Protocol(String),
}

impl ProviderError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transport(_))
    }
}

/// One chat completion: the full transcript in, one assistant turn out.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatTurn, ProviderError>;
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Any endpoint speaking the OpenAI chat-completions contract.
    #[default]
    OpenaiCompatible,
    /// Replays `script`; for demos and tests.
    Scripted,
}

/// Loaded from `--provider-config`. The API key itself is never stored
/// here, only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub max_iterations: usize,
    pub timeout_secs: u64,
    pub script: Vec<ChatTurn>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::OpenaiCompatible,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "TEMPOQL_API_KEY".into(),
            max_iterations: 6,
            timeout_secs: 120,
            script: Vec::new(),
        }
    }
}

impl ProviderConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn build(&self) -> Result<Box<dyn Provider>, ProviderError> {
        Ok(match self.kind {
            ProviderKind::OpenaiCompatible => Box::new(HttpProvider::new(self)?),
            ProviderKind::Scripted => Box::new(ScriptedProvider::new(self.script.clone())),
        })
    }
}

/// Deterministic stand-in for a model. The reply to a request is chosen by
/// how many assistant turns the request already holds, so one instance
/// serves any number of independent sessions. Every request is recorded
/// exactly as it would be serialized.
pub struct ScriptedProvider {
    script: Vec<ChatTurn>,
    repeat_last: bool,
    fail_next: AtomicUsize,
    requests: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new(script: Vec<ChatTurn>) -> Self {
        ScriptedProvider { script, repeat_last: false, fail_next: AtomicUsize::new(0), requests: Mutex::new(Vec::new()) }
    }

    /// Once the script runs out, keep answering with its last turn.
    pub fn repeating(mut self) -> Self {
        self.repeat_last = true;
        self
    }

    /// Fail the next `n` calls with a transport error.
    pub fn failing(self, n: usize) -> Self {
        self.fail_next.store(n, Ordering::SeqCst);
        self
    }

    /// Serialized bodies of every request received so far.
    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatTurn, ProviderError> {
        self.requests.lock().unwrap().push(serde_json::to_string(request).expect("request serializes"));
        if self.fail_next.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
            return Err(ProviderError::Transport("injected failure".into()));
        }
        let turn = request.messages.iter().filter(|t| t.role == Role::Assistant).count();
        let reply = match self.script.get(turn) {
            Some(t) => t,
            None if self.repeat_last && !self.script.is_empty() => self.script.last().unwrap(),
            None => return Err(ProviderError::Protocol(format!("script has no reply for turn {}", turn + 1))),
        };
        Ok(ChatTurn { role: Role::Assistant, tool_call_id: None, ..reply.clone() })
    }
}

/// Adapter for OpenAI-style `/chat/completions` endpoints.
pub struct HttpProvider {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key_env: String,
}

impl HttpProvider {
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(HttpProvider { client, endpoint: config.endpoint.clone(), api_key_env: config.api_key_env.clone() })
    }
}

/// Request body in the OpenAI wire format.
pub(crate) fn wire_request(request: &ChatRequest) -> Json {
    let messages: Vec<Json> = request
        .messages
        .iter()
        .map(|t| {
            let mut m = json!({"role": t.role, "content": t.content});
            if !t.tool_calls.is_empty() {
                m["tool_calls"] = t
                    .tool_calls
                    .iter()
                    .map(|c| {
                        json!({"id": c.id, "type": "function",
                               "function": {"name": c.name, "arguments": c.arguments.to_string()}})
                    })
                    .collect();
            }
            if let Some(id) = &t.tool_call_id {
                m["tool_call_id"] = json!(id);
            }
            m
        })
        .collect();
    let tools: Vec<Json> = request
        .tools
        .iter()
        .map(|t| json!({"type": "function", "function": {"name": t.name, "description": t.description, "parameters": t.parameters}}))
        .collect();
    json!({"model": request.model, "messages": messages, "tools": tools})
}

pub(crate) fn parse_wire_response(body: &Json) -> Result<ChatTurn, ProviderError> {
    let bad = |what: &str| ProviderError::Protocol(what.to_string());
    let message = body.pointer("/choices/0/message").ok_or_else(|| bad("no choices[0].message"))?;
    let content = message.get("content").and_then(Json::as_str).unwrap_or("").to_string();
    let mut calls = Vec::new();
    for c in message.get("tool_calls").and_then(Json::as_array).into_iter().flatten() {
        let name = c.pointer("/function/name").and_then(Json::as_str).ok_or_else(|| bad("tool call without a name"))?;
        let arguments = match c.pointer("/function/arguments") {
            Some(Json::String(s)) => serde_json::from_str(s).unwrap_or(Json::String(s.clone())),
            Some(other) => other.clone(),
            None => Json::Null,
        };
        let id = c.get("id").and_then(Json::as_str).unwrap_or_default().to_string();
        calls.push(ToolCall { id, name: name.to_string(), arguments });
    }
    Ok(ChatTurn { tool_calls: calls, ..ChatTurn::assistant(content) })
}

impl Provider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatTurn, ProviderError> {
        let mut req = self.client.post(&self.endpoint).json(&wire_request(request));
        if let Ok(key) = std::env::var(&self.api_key_env) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.without_url().to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.without_url().to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(ProviderError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ProviderError::Rejected { status: status.as_u16(), body: text.chars().take(500).collect() });
        }
        let body: Json = serde_json::from_str(&text).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        parse_wire_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::ToolDefinition;

    #[test]
    fn wire_round_trip() {
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![
                ChatTurn::user("hi"),
                ChatTurn::calling(vec![ToolCall { id: "c1".into(), name: "search_concepts".into(), arguments: json!({"query": "resp"}) }]),
                ChatTurn::tool("c1", "[]"),
            ],
            tools: vec![ToolDefinition::search_concepts()],
        };
        let wire = wire_request(&req);
        assert_eq!(wire["messages"][1]["tool_calls"][0]["function"]["arguments"], json!("{\"query\":\"resp\"}"));
        assert_eq!(wire["messages"][2]["tool_call_id"], json!("c1"));
        assert_eq!(wire["tools"][0]["type"], json!("function"));

        let body = json!({"choices": [{"message": {"role": "assistant", "content": null,
            "tool_calls": [{"id": "x", "type": "function", "function": {"name": "search_concepts", "arguments": "{\"query\":\"hr\"}"}}]}}]});
        let turn = parse_wire_response(&body).unwrap();
        assert_eq!(turn.tool_calls[0].arguments, json!({"query": "hr"}));
        assert_eq!(turn.content, "");
        assert!(parse_wire_response(&json!({})).is_err());
    }

    #[test]
    fn config_defaults() {
        let c = ProviderConfig::from_json(r#"{"model": "local"}"#).unwrap();
        assert_eq!((c.max_iterations, c.model.as_str()), (6, "local"));
        assert!(ProviderConfig::from_json(r#"{"api_key": "sk-123"}"#).is_err());
    }
}
