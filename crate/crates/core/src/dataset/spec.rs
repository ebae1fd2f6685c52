//! Dataset Specification: which source files hold attributes, events and
//! intervals, how concept ids map to names, and how tables join to a
//! trajectory id.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value as Json};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    Attributes,
    Event,
    Interval,
}

impl TableKind {
    pub fn label(self) -> &'static str {
        match self {
            TableKind::Attributes => "attribute",
            TableKind::Event => "event",
            TableKind::Interval => "interval",
        }
    }
}

/// Named value transforms allowed in attribute definitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    YearToTimestamp,
    ToNumber,
    ToLowercase,
}

impl Transform {
    pub fn from_name(s: &str) -> Option<Transform> {
        Some(match s {
            "year_to_timestamp" => Transform::YearToTimestamp,
            "to_number" => Transform::ToNumber,
            "to_lowercase" => Transform::ToLowercase,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeSpec {
    pub value_field: String,
    pub value_transform: Option<Transform>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableSpec {
    pub source: String,
    pub kind: TableKind,
    pub id_field: String,
    pub scope: String,
    pub time_field: Option<String>,
    pub start_time_field: Option<String>,
    pub end_time_field: Option<String>,
    pub concept_id_field: Option<String>,
    /// Column whose text is the element type (`interval_type_field` or
    /// `event_type_field`).
    pub type_field: Option<String>,
    pub default_value_field: Option<String>,
    pub attributes: BTreeMap<String, AttributeSpec>,
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabularyScope {
    Fixed(String),
    Field { field: String, scopes: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VocabularySpec {
    pub source: String,
    pub concept_id_field: String,
    pub concept_name_field: String,
    pub scope: VocabularyScope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JoinSpec {
    pub dest_table: String,
    pub join_key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSpec {
    pub tables: Vec<TableSpec>,
    pub vocabularies: Vec<VocabularySpec>,
    pub joins: BTreeMap<String, JoinSpec>,
    /// Directory holding the source files, resolved against the spec's location.
    pub root: PathBuf,
    /// Unknown keys and other non-fatal findings.
    pub warnings: Vec<String>,
    /// Canonical JSON used for fingerprinting.
    #[serde(skip)]
    pub canonical: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecViolation {
    pub pointer: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("invalid dataset specification: {}", .0.iter().map(|v| format!("{}: {}", v.pointer, v.message)).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<SpecViolation>),
    #[error("join cycle: {}", .0.join(" -> "))]
    JoinCycle(Vec<String>),
}

impl SpecError {
    pub fn violations(&self) -> &[SpecViolation] {
        match self {
            SpecError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// Reads and validates a specification file. A relative `root` is resolved
/// against the file's directory; without `root` the directory itself is used.
pub fn load_spec(path: &Path) -> Result<DatasetSpec, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_spec(&text, base)
}

pub fn parse_spec(text: &str, base: &Path) -> Result<DatasetSpec, SpecError> {
    let json: Json = serde_json::from_str(text).map_err(|e| SpecError::Json(e.to_string()))?;
    let mut v = Validator::default();
    let spec = v.spec(&json, base);
    if !v.errors.is_empty() {
        return Err(SpecError::Invalid(v.errors));
    }
    let mut spec = spec.expect("validated");
    spec.warnings = v.warnings;
    check_joins(&spec)?;
    check_vocabulary_scopes(&mut spec)?;
    spec.canonical = serde_json::to_string(&json).unwrap_or_default();
    Ok(spec)
}

fn check_joins(spec: &DatasetSpec) -> Result<(), SpecError> {
    let tables: BTreeSet<&str> = spec.tables.iter().map(|t| t.source.as_str()).collect();
    let mut errors = Vec::new();
    for (src, join) in &spec.joins {
        let mut seen = vec![src.clone()];
        let mut cur = join.dest_table.clone();
        loop {
            if seen.contains(&cur) {
                seen.push(cur);
                return Err(SpecError::JoinCycle(seen));
            }
            seen.push(cur.clone());
            match spec.joins.get(&cur) {
                Some(next) => cur = next.dest_table.clone(),
                None => break,
            }
        }
        let reachable = seen[1..].iter().any(|s| tables.contains(s.as_str()));
        if !reachable {
            errors.push(SpecViolation {
                pointer: format!("/joins/{}/dest_table", escape_pointer(src)),
                message: format!("'{}' is neither a table nor joinable to one", join.dest_table),
            });
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(SpecError::Invalid(errors))
    }
}

fn check_vocabulary_scopes(spec: &mut DatasetSpec) -> Result<(), SpecError> {
    let scopes: BTreeSet<&str> = spec.tables.iter().map(|t| t.scope.as_str()).collect();
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for (i, voc) in spec.vocabularies.iter().enumerate() {
        match &voc.scope {
            VocabularyScope::Fixed(s) if !scopes.contains(s.as_str()) => errors.push(SpecViolation {
                pointer: format!("/vocabularies/{i}/scope"),
                message: format!("scope '{s}' is not used by any table"),
            }),
            VocabularyScope::Field { scopes: listed, .. } => {
                if !listed.iter().any(|s| scopes.contains(s.as_str())) {
                    errors.push(SpecViolation {
                        pointer: format!("/vocabularies/{i}/scopes"),
                        message: "none of the listed scopes is used by any table".into(),
                    });
                }
                for s in listed.iter().filter(|s| !scopes.contains(s.as_str())) {
                    warnings.push(format!("/vocabularies/{i}/scopes: scope '{s}' has no table"));
                }
            }
            _ => {}
        }
    }
    spec.warnings.extend(warnings);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(SpecError::Invalid(errors))
    }
}

/// RFC 6901 escaping of a single reference token.
fn escape_pointer(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

#[derive(Default)]
struct Validator {
    errors: Vec<SpecViolation>,
    warnings: Vec<String>,
}

impl Validator {
    fn err(&mut self, pointer: impl Into<String>, message: impl Into<String>) {
        self.errors.push(SpecViolation { pointer: pointer.into(), message: message.into() });
    }

    fn unknown_keys(&mut self, obj: &Map<String, Json>, known: &[&str], at: &str) {
        for k in obj.keys() {
            if !known.contains(&k.as_str()) {
                self.warnings.push(format!("{at}/{}: unknown key ignored", escape_pointer(k)));
            }
        }
    }

    fn string(&mut self, obj: &Map<String, Json>, key: &str, at: &str, required: bool) -> Option<String> {
        match obj.get(key) {
            Some(Json::String(s)) if !s.trim().is_empty() => Some(s.clone()),
            Some(Json::String(_)) => {
                self.err(format!("{at}/{key}"), "must not be empty");
                None
            }
            Some(Json::Null) | None => {
                if required {
                    self.err(format!("{at}/{key}"), "required key is missing");
                }
                None
            }
            Some(_) => {
                self.err(format!("{at}/{key}"), "must be a string");
                None
            }
        }
    }

    fn section<'a>(&mut self, root: &'a Map<String, Json>, key: &str) -> Option<(&'a Json, String)> {
        let upper = key.to_ascii_uppercase();
        match (root.get(key), root.get(&upper)) {
            (Some(v), _) => Some((v, format!("/{key}"))),
            (None, Some(v)) => Some((v, format!("/{upper}"))),
            (None, None) => None,
        }
    }

    fn spec(&mut self, json: &Json, base: &Path) -> Option<DatasetSpec> {
        let Some(root) = json.as_object() else {
            self.err("", "specification must be a JSON object");
            return None;
        };
        self.unknown_keys(
            root,
            &["tables", "TABLES", "vocabularies", "VOCABULARIES", "joins", "JOINS", "root", "name", "comment"],
            "",
        );
        let mut tables = Vec::new();
        match self.section(root, "tables") {
            Some((Json::Array(items), at)) => {
                if items.is_empty() {
                    self.err(at.clone(), "at least one table is required");
                }
                for (i, t) in items.iter().enumerate() {
                    if let Some(t) = self.table(t, &format!("{at}/{i}")) {
                        tables.push(t);
                    }
                }
            }
            Some((_, at)) => self.err(at, "must be an array"),
            None => self.err("/tables", "required key is missing"),
        }
        let mut vocabularies = Vec::new();
        match self.section(root, "vocabularies") {
            Some((Json::Array(items), at)) => {
                for (i, v) in items.iter().enumerate() {
                    if let Some(v) = self.vocabulary(v, &format!("{at}/{i}")) {
                        vocabularies.push(v);
                    }
                }
            }
            Some((_, at)) => self.err(at, "must be an array"),
            None => {}
        }
        let mut joins = BTreeMap::new();
        match self.section(root, "joins") {
            Some((Json::Object(items), at)) => {
                for (src, j) in items {
                    let p = format!("{at}/{}", escape_pointer(src));
                    let Some(obj) = j.as_object() else {
                        self.err(p, "must be an object");
                        continue;
                    };
                    self.unknown_keys(obj, &["dest_table", "join_key", "comment"], &p);
                    let dest = self.string(obj, "dest_table", &p, true);
                    let key = self.string(obj, "join_key", &p, true);
                    if let (Some(dest_table), Some(join_key)) = (dest, key) {
                        joins.insert(src.clone(), JoinSpec { dest_table, join_key });
                    }
                }
            }
            Some((_, at)) => self.err(at, "must be an object"),
            None => {}
        }
        let root_dir = match root.get("root") {
            Some(Json::String(r)) => {
                let p = PathBuf::from(r);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            }
            Some(_) => {
                self.err("/root", "must be a string");
                base.to_path_buf()
            }
            None => base.to_path_buf(),
        };
        Some(DatasetSpec { tables, vocabularies, joins, root: root_dir, warnings: Vec::new(), canonical: String::new() })
    }

    fn table(&mut self, json: &Json, at: &str) -> Option<TableSpec> {
        let Some(obj) = json.as_object() else {
            self.err(at, "table must be an object");
            return None;
        };
        self.unknown_keys(
            obj,
            &[
                "source",
                "type",
                "id_field",
                "scope",
                "time_field",
                "start_time_field",
                "end_time_field",
                "concept_id_field",
                "interval_type_field",
                "event_type_field",
                "default_value_field",
                "attributes",
                "comment",
            ],
            at,
        );
        let n_errors = self.errors.len();
        let source = self.string(obj, "source", at, true);
        let id_field = self.string(obj, "id_field", at, true);
        let scope = self.string(obj, "scope", at, true);
        let kind = match self.string(obj, "type", at, false).as_deref() {
            Some("event") | Some("events") => Some(TableKind::Event),
            Some("interval") | Some("intervals") => Some(TableKind::Interval),
            Some("attribute") | Some("attributes") => Some(TableKind::Attributes),
            None if obj.contains_key("attributes") => Some(TableKind::Attributes),
            None => {
                self.err(format!("{at}/type"), "required unless the table defines 'attributes'");
                None
            }
            Some(other) => {
                self.err(format!("{at}/type"), format!("unknown table type '{other}'"));
                None
            }
        };
        let time_field = self.string(obj, "time_field", at, kind == Some(TableKind::Event));
        let start_time_field = self.string(obj, "start_time_field", at, kind == Some(TableKind::Interval));
        let end_time_field = self.string(obj, "end_time_field", at, kind == Some(TableKind::Interval));
        let concept_id_field = self.string(obj, "concept_id_field", at, false);
        let interval_type = self.string(obj, "interval_type_field", at, false);
        let event_type = self.string(obj, "event_type_field", at, false);
        if interval_type.is_some() && event_type.is_some() {
            self.err(format!("{at}/event_type_field"), "only one type field may be given");
        }
        let type_field = interval_type.or(event_type);
        if concept_id_field.is_some() && type_field.is_some() {
            self.err(format!("{at}/concept_id_field"), "concept_id_field and a literal type field are mutually exclusive");
        }
        let default_value_field = self.string(obj, "default_value_field", at, false);
        let comment = self.string(obj, "comment", at, false);
        let mut attributes = BTreeMap::new();
        match obj.get("attributes") {
            Some(Json::Object(items)) => {
                for (name, a) in items {
                    let p = format!("{at}/attributes/{}", escape_pointer(name));
                    let Some(aobj) = a.as_object() else {
                        self.err(p, "attribute must be an object");
                        continue;
                    };
                    self.unknown_keys(aobj, &["value_field", "value_transform", "comment"], &p);
                    let value_field = self.string(aobj, "value_field", &p, true);
                    let transform = match self.string(aobj, "value_transform", &p, false) {
                        Some(t) => match Transform::from_name(&t) {
                            Some(t) => Some(t),
                            None => {
                                self.err(
                                    format!("{p}/value_transform"),
                                    format!("unknown transform '{t}' (expected year_to_timestamp, to_number or to_lowercase)"),
                                );
                                None
                            }
                        },
                        None => None,
                    };
                    if let Some(value_field) = value_field {
                        attributes.insert(name.clone(), AttributeSpec { value_field, value_transform: transform });
                    }
                }
            }
            Some(_) => self.err(format!("{at}/attributes"), "must be an object"),
            None => {}
        }
        if kind == Some(TableKind::Attributes) && attributes.is_empty() && !obj.contains_key("attributes") {
            self.err(format!("{at}/attributes"), "attribute tables need a non-empty attributes map");
        } else if kind == Some(TableKind::Attributes) && attributes.is_empty() {
            self.err(format!("{at}/attributes"), "must not be empty");
        }
        if self.errors.len() > n_errors {
            return None;
        }
        Some(TableSpec {
            source: source?,
            kind: kind?,
            id_field: id_field?,
            scope: scope?,
            time_field,
            start_time_field,
            end_time_field,
            concept_id_field,
            type_field,
            default_value_field,
            attributes,
            comment,
        })
    }

    fn vocabulary(&mut self, json: &Json, at: &str) -> Option<VocabularySpec> {
        let Some(obj) = json.as_object() else {
            self.err(at, "vocabulary must be an object");
            return None;
        };
        self.unknown_keys(
            obj,
            &["source", "concept_id_field", "concept_name_field", "scope", "scope_field", "scopes", "comment"],
            at,
        );
        let n_errors = self.errors.len();
        let source = self.string(obj, "source", at, true);
        let id = self.string(obj, "concept_id_field", at, true);
        let name = self.string(obj, "concept_name_field", at, true);
        let fixed = self.string(obj, "scope", at, false);
        let field = self.string(obj, "scope_field", at, false);
        let scopes = match obj.get("scopes") {
            Some(Json::Array(items)) => {
                let mut out = Vec::new();
                for (i, s) in items.iter().enumerate() {
                    match s.as_str() {
                        Some(s) => out.push(s.to_string()),
                        None => self.err(format!("{at}/scopes/{i}"), "must be a string"),
                    }
                }
                Some(out)
            }
            Some(_) => {
                self.err(format!("{at}/scopes"), "must be an array");
                None
            }
            None => None,
        };
        let scope = match (fixed, field, scopes) {
            (Some(s), None, None) => Some(VocabularyScope::Fixed(s)),
            (None, Some(field), Some(scopes)) if !scopes.is_empty() => Some(VocabularyScope::Field { field, scopes }),
            (None, Some(_), _) => {
                self.err(format!("{at}/scopes"), "scope_field requires a non-empty scopes list");
                None
            }
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                self.err(format!("{at}/scope"), "give either scope or scope_field with scopes, not both");
                None
            }
            (None, None, _) => {
                self.err(format!("{at}/scope"), "either scope or scope_field with scopes is required");
                None
            }
        };
        if self.errors.len() > n_errors {
            return None;
        }
        Some(VocabularySpec { source: source?, concept_id_field: id?, concept_name_field: name?, scope: scope? })
    }
}

/// Maps a dotted source name to a file under `root`: `a.b` → `root/a/b.csv`.
pub fn source_path(root: &Path, source: &str) -> PathBuf {
    let mut p = root.to_path_buf();
    for part in source.split('.') {
        p.push(part);
    }
    p.set_extension("csv");
    p
}
