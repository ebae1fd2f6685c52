//! Dataset specifications, ingestion of delimited source files, the concept
//! catalog, and resolution of `{…}` element queries into series.

mod catalog;
mod ingest;
mod matcher;
mod resolve;
mod spec;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::series::TrajectoryId;
use crate::value::Value;

pub use catalog::{search_concepts, CatalogEntry, SearchResult};
pub use ingest::{ingest, IngestReport};
pub use matcher::TextMatcher;
pub use resolve::{resolve_elements, PlanTable, RetrievalPlan};
pub use spec::{
    load_spec, parse_spec, source_path, AttributeSpec, DatasetSpec, JoinSpec, SpecError, SpecViolation, TableKind,
    TableSpec, Transform, VocabularyScope, VocabularySpec,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{table}: column '{column}' not found")]
    MissingColumn { table: String, column: String },
    #[error("{table}: id field '{field}' is absent after joins")]
    MissingIdField { table: String, field: String },
    #[error("unknown scope '{0}'")]
    UnknownScope(String),
    #[error("unknown value column '{column}' in {table}")]
    UnknownValueColumn { table: String, column: String },
    #[error("element query is ambiguous: it matches {} data; add a type criterion", .0.join(" and "))]
    Ambiguous(Vec<String>),
    #[error("element query matches several attributes ({}); narrow it to one", .0.join(", "))]
    MultipleAttributes(Vec<String>),
    #[error("invalid regex: {0}")]
    Regex(String),
}

/// One ingested data element table. Rows are sorted by (trajectory, time,
/// source order); attribute-map tables are sorted by (trajectory, order).
#[derive(Debug, Clone)]
pub struct Table {
    pub spec: TableSpec,
    pub ids: Vec<TrajectoryId>,
    /// Event time or interval start; empty for attribute-map tables.
    pub times: Vec<i64>,
    /// Interval end; empty for other kinds.
    pub ends: Vec<i64>,
    /// Per-row index into `type_keys` (concept id or literal type value).
    pub type_codes: Vec<u32>,
    pub type_keys: Vec<Arc<str>>,
    /// Source row number of each row (after joins).
    pub order: Vec<u64>,
    /// Whether trajectory ids came through a join.
    pub joined: bool,
    /// Non-structural columns by header name.
    pub columns: BTreeMap<String, Vec<Value>>,
}

impl Table {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn kind(&self) -> TableKind {
        self.spec.kind
    }
}

/// An ingested dataset: immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub tables: Vec<Table>,
    /// scope → concept id → concept name.
    pub vocabulary: BTreeMap<String, BTreeMap<String, String>>,
    /// Sorted trajectory universe.
    pub trajectories: Vec<TrajectoryId>,
    /// Earliest and latest timestamp per trajectory (same order as
    /// `trajectories`); `None` for trajectories without events or intervals.
    pub time_bounds: Vec<Option<(i64, i64)>>,
    pub fingerprint: String,
    pub report: Vec<IngestReport>,
    pub catalog: Vec<CatalogEntry>,
}

impl Dataset {
    pub fn mintime(&self, id: TrajectoryId) -> Option<i64> {
        let i = self.trajectories.binary_search(&id).ok()?;
        self.time_bounds[i].map(|b| b.0)
    }

    pub fn maxtime(&self, id: TrajectoryId) -> Option<i64> {
        let i = self.trajectories.binary_search(&id).ok()?;
        self.time_bounds[i].map(|b| b.1)
    }

    /// Distinct scopes across tables, sorted.
    pub fn scopes(&self) -> Vec<String> {
        let mut s: Vec<String> = self.tables.iter().map(|t| t.spec.scope.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Table comments, forwarded to the assistant as context.
    pub fn comments(&self) -> Vec<(String, String)> {
        self.tables
            .iter()
            .filter_map(|t| t.spec.comment.as_ref().map(|c| (t.spec.source.clone(), c.clone())))
            .collect()
    }

    /// Display name for a type key of a table: the vocabulary name for
    /// concept tables (falling back to the id), the literal value otherwise.
    pub fn concept_name<'a>(&'a self, table: &'a Table, key: &'a str) -> &'a str {
        if table.spec.concept_id_field.is_some() {
            self.vocabulary
                .get(&table.spec.scope)
                .and_then(|m| m.get(key))
                .map_or(key, |s| s.as_str())
        } else {
            key
        }
    }
}

/// Summary of the loaded dataset used by the HTTP metadata endpoint.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub tables: usize,
    pub trajectories: usize,
    pub scopes: Vec<String>,
    pub fingerprint: String,
}

impl Dataset {
    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            tables: self.tables.len(),
            trajectories: self.trajectories.len(),
            scopes: self.scopes(),
            fingerprint: self.fingerprint.clone(),
        }
    }
}
