//! The named-query collection and run history, persisted as one JSON file.
//!
//! ```json
//! {"version": 1,
//!  "queries": [{"name": "hr", "query": "{Heart Rate}", "description": "…", "updated_at": "…"}],
//!  "history": [{"query": "…", "ran_at": "2024-01-01T00:00:00Z", "ok": true}]}
//! ```
//! Unknown top-level keys survive a load/save cycle.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::eval::StoreBindings;
use crate::lang::{parse, ExprKind, ParseError};

pub const HISTORY_CAP: usize = 500;
pub const STORE_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot access {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("store file is empty")]
    Empty,
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("{pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("'{0}' is not a valid query name (names must be plain identifiers)")]
    InvalidName(String),
    #[error("query '{name}' does not parse: {error}")]
    Parse { name: String, error: ParseError },
    #[error("no stored query named '{0}'")]
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredQuery {
    pub name: String,
    pub query: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub updated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub query: String,
    pub ran_at: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryStore {
    pub version: u64,
    pub queries: Vec<StoredQuery>,
    pub history: Vec<HistoryEntry>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Json>,
}

impl Default for QueryStore {
    fn default() -> Self {
        QueryStore { version: STORE_VERSION, queries: Vec::new(), history: Vec::new(), extra: BTreeMap::new() }
    }
}

pub fn now_iso() -> String {
    chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// A name is storable when it parses as a bare variable reference.
pub fn valid_name(name: &str) -> bool {
    matches!(parse(name), Ok(e) if matches!(&e.kind, ExprKind::Variable(v) if v == name))
}

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> StoreError {
    StoreError::Schema { pointer: pointer.into(), message: message.into() }
}

fn string_field(obj: &Map<String, Json>, key: &str, at: &str, required: bool) -> Result<Option<String>, StoreError> {
    match obj.get(key) {
        None | Some(Json::Null) if !required => Ok(None),
        None => Err(schema(format!("{at}/{key}"), "missing required field")),
        Some(Json::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(schema(format!("{at}/{key}"), "expected a string")),
    }
}

impl QueryStore {
    pub fn load(path: &Path) -> Result<QueryStore, StoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| StoreError::Io { path: path.display().to_string(), source })?;
        QueryStore::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<QueryStore, StoreError> {
        if text.trim().is_empty() {
            return Err(StoreError::Empty);
        }
        let root: Json = serde_json::from_str(text).map_err(|e| StoreError::Json(e.to_string()))?;
        let Json::Object(mut root) = root else { return Err(schema("", "expected an object")) };
        let version = match root.remove("version") {
            None => STORE_VERSION,
            Some(Json::Number(n)) if n.as_u64() == Some(STORE_VERSION) => STORE_VERSION,
            Some(_) => return Err(schema("/version", format!("unsupported version (expected {STORE_VERSION})"))),
        };
        let mut store = QueryStore { version, ..Default::default() };
        match root.remove("queries") {
            None => {}
            Some(Json::Array(items)) => {
                for (i, item) in items.iter().enumerate() {
                    let at = format!("/queries/{i}");
                    let Json::Object(obj) = item else { return Err(schema(at, "expected an object")) };
                    let name = string_field(obj, "name", &at, true)?.unwrap_or_default();
                    if !valid_name(&name) {
                        return Err(schema(format!("{at}/name"), format!("'{name}' is not a plain identifier")));
                    }
                    if store.get(&name).is_some() {
                        return Err(schema(format!("{at}/name"), format!("duplicate name '{name}'")));
                    }
                    store.queries.push(StoredQuery {
                        name,
                        query: string_field(obj, "query", &at, true)?.unwrap_or_default(),
                        description: string_field(obj, "description", &at, false)?,
                        updated_at: string_field(obj, "updated_at", &at, false)?,
                    });
                }
            }
            Some(_) => return Err(schema("/queries", "expected an array")),
        }
        match root.remove("history") {
            None => {}
            Some(Json::Array(items)) => {
                for (i, item) in items.iter().enumerate() {
                    let at = format!("/history/{i}");
                    let Json::Object(obj) = item else { return Err(schema(at, "expected an object")) };
                    let ok = match obj.get("ok") {
                        Some(Json::Bool(b)) => *b,
                        _ => return Err(schema(format!("{at}/ok"), "expected a boolean")),
                    };
                    store.history.push(HistoryEntry {
                        query: string_field(obj, "query", &at, true)?.unwrap_or_default(),
                        ran_at: string_field(obj, "ran_at", &at, true)?.unwrap_or_default(),
                        ok,
                    });
                }
            }
            Some(_) => return Err(schema("/history", "expected an array")),
        }
        store.extra = root.into_iter().collect();
        Ok(store)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("store serializes") + "\n"
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let io = |source| StoreError::Io { path: path.display().to_string(), source };
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(self.to_json().as_bytes()).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&StoredQuery> {
        self.queries.iter().find(|q| q.name == name)
    }

    /// Inserts or replaces a query. The text must parse.
    pub fn upsert(&mut self, name: &str, text: &str, description: Option<String>) -> Result<(), StoreError> {
        if !valid_name(name) {
            return Err(StoreError::InvalidName(name.to_string()));
        }
        parse(text).map_err(|error| StoreError::Parse { name: name.to_string(), error })?;
        let entry = StoredQuery { name: name.to_string(), query: text.to_string(), description, updated_at: Some(now_iso()) };
        match self.queries.iter_mut().find(|q| q.name == name) {
            Some(q) => *q = entry,
            None => self.queries.push(entry),
        }
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Result<StoredQuery, StoreError> {
        let i = self.queries.iter().position(|q| q.name == name).ok_or_else(|| StoreError::NotFound(name.to_string()))?;
        Ok(self.queries.remove(i))
    }

    /// Appends a run to the history, evicting the oldest beyond the cap.
    pub fn record_history(&mut self, text: &str, ok: bool) {
        self.history.push(HistoryEntry { query: text.to_string(), ran_at: now_iso(), ok });
        if self.history.len() > HISTORY_CAP {
            let excess = self.history.len() - HISTORY_CAP;
            self.history.drain(..excess);
        }
    }

    /// Name → query text, as consumed by the evaluator.
    pub fn bindings(&self) -> StoreBindings {
        self.queries.iter().map(|q| (q.name.clone(), q.query.clone())).collect()
    }
}
