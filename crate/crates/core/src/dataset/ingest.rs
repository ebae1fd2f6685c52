//! Loads source files named by a specification into column stores.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::catalog::build_catalog;
use super::spec::{source_path, DatasetSpec, TableKind, TableSpec, VocabularyScope};
use super::{Dataset, DatasetError, Table};
use crate::series::TrajectoryId;
use crate::value::{format_number, parse_timestamp, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub table: String,
    pub rows_read: u64,
    pub rows_dropped: u64,
    pub reasons: BTreeMap<String, u64>,
}

impl IngestReport {
    fn new(table: &str) -> Self {
        IngestReport { table: table.to_string(), rows_read: 0, rows_dropped: 0, reasons: BTreeMap::new() }
    }

    fn drop_row(&mut self, reason: &str) {
        self.rows_dropped += 1;
        *self.reasons.entry(reason.to_string()).or_default() += 1;
    }
}

/// A delimited file held in memory.
struct RawFile {
    path: std::path::PathBuf,
    headers: Vec<String>,
    bytes: Vec<u8>,
    digest: String,
}

impl RawFile {
    fn read(root: &Path, source: &str) -> Result<RawFile, DatasetError> {
        let path = source_path(root, source);
        let bytes = std::fs::read(&path).map_err(|e| DatasetError::Io { path: path.clone(), message: e.to_string() })?;
        let digest = hex::encode(Sha256::digest(&bytes));
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(bytes.as_slice());
        let headers = rdr
            .headers()
            .map_err(|e| DatasetError::Io { path: path.clone(), message: e.to_string() })?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        Ok(RawFile { path, headers, bytes, digest })
    }

    /// Streams data records through `f`, reusing one record buffer.
    fn for_each(&self, mut f: impl FnMut(&csv::StringRecord)) -> Result<(), DatasetError> {
        let mut rdr = self.reader();
        let mut rec = csv::StringRecord::new();
        while self.next(&mut rdr, &mut rec)? {
            f(&rec);
        }
        Ok(())
    }

    fn reader(&self) -> csv::Reader<&[u8]> {
        csv::ReaderBuilder::new().flexible(true).from_reader(self.bytes.as_slice())
    }

    fn next(&self, rdr: &mut csv::Reader<&[u8]>, rec: &mut csv::StringRecord) -> Result<bool, DatasetError> {
        rdr.read_record(rec).map_err(|e| DatasetError::Io { path: self.path.clone(), message: e.to_string() })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, source: &str, name: &str) -> Result<usize, DatasetError> {
        self.column(name).ok_or_else(|| DatasetError::MissingColumn { table: source.to_string(), column: name.to_string() })
    }
}

fn cell<'a>(r: &'a csv::StringRecord, i: usize) -> &'a str {
    r.get(i).unwrap_or("").trim()
}

/// Canonical text of a key cell: numbers print without trailing zeros so
/// `220045` and `220045.0` join.
pub(crate) fn normalize_key(raw: &str) -> Option<String> {
    match Value::infer(raw) {
        Value::Missing => None,
        Value::Number(n) => Some(format_number(n)),
        _ => Some(raw.trim().to_string()),
    }
}

fn parse_id(raw: &str) -> Option<TrajectoryId> {
    let s = raw.trim();
    if let Ok(i) = s.parse::<i64>() {
        return Some(i);
    }
    let f: f64 = s.parse().ok()?;
    (f.fract() == 0.0 && f.abs() < 9.0e15).then_some(f as i64)
}

/// Resolves trajectory ids for the rows of `source`, following joins.
struct IdSource {
    /// Column holding the id directly.
    direct: Option<usize>,
    /// Otherwise: join-key column and key → ids map.
    lookup: Option<(usize, HashMap<String, Vec<String>>)>,
}

impl IdSource {
    fn ids<'a>(&'a self, r: &'a csv::StringRecord) -> Vec<&'a str> {
        if let Some(i) = self.direct {
            return vec![cell(r, i)];
        }
        let (k, map) = self.lookup.as_ref().expect("id source");
        normalize_key(cell(r, *k))
            .and_then(|key| map.get(&key))
            .map(|v| v.iter().map(|s| s.as_str()).collect())
            .unwrap_or_default()
    }
}

struct Loader<'a> {
    spec: &'a DatasetSpec,
    digests: std::sync::Mutex<BTreeMap<String, String>>,
}

impl Loader<'_> {
    fn read(&self, source: &str) -> Result<RawFile, DatasetError> {
        let f = RawFile::read(&self.spec.root, source)?;
        self.digests.lock().unwrap().insert(source.to_string(), f.digest.clone());
        Ok(f)
    }

    fn id_source(&self, source: &str, file: &RawFile, id_field: &str, depth: usize) -> Result<IdSource, DatasetError> {
        if let Some(i) = file.column(id_field) {
            return Ok(IdSource { direct: Some(i), lookup: None });
        }
        let missing = || DatasetError::MissingIdField { table: source.to_string(), field: id_field.to_string() };
        let join = self.spec.joins.get(source).ok_or_else(missing)?;
        if depth > self.spec.joins.len() {
            return Err(missing());
        }
        let key_col = file.require(source, &join.join_key)?;
        let dest = self.read(&join.dest_table)?;
        let dest_key = dest.require(&join.dest_table, &join.join_key)?;
        let dest_ids = self.id_source(&join.dest_table, &dest, id_field, depth + 1).map_err(|_| missing())?;
        let mut map: HashMap<String, Vec<String>> = HashMap::new();
        dest.for_each(|r| {
            let Some(key) = normalize_key(cell(r, dest_key)) else { return };
            for id in dest_ids.ids(r) {
                if !id.is_empty() {
                    map.entry(key.clone()).or_default().push(id.to_string());
                }
            }
        })?;
        Ok(IdSource { direct: None, lookup: Some((key_col, map)) })
    }

    fn table(&self, spec: &TableSpec) -> Result<(Table, IngestReport), DatasetError> {
        let file = self.read(&spec.source)?;
        let ids = self.id_source(&spec.source, &file, &spec.id_field, 0)?;
        let src = spec.source.as_str();
        let col = |f: &Option<String>| f.as_deref().map(|f| file.require(src, f)).transpose();
        let time_col = match spec.kind {
            TableKind::Event => col(&spec.time_field)?,
            TableKind::Interval => col(&spec.start_time_field)?,
            TableKind::Attributes => None,
        };
        let end_col = if spec.kind == TableKind::Interval { col(&spec.end_time_field)? } else { None };
        let concept_col = col(&spec.concept_id_field)?;
        let type_col = col(&spec.type_field)?;
        if let Some(d) = &spec.default_value_field {
            file.require(src, d)?;
        }
        for a in spec.attributes.values() {
            file.require(src, &a.value_field)?;
        }

        let structural: Vec<usize> = [ids.direct, time_col, end_col, concept_col, type_col].into_iter().flatten().collect();
        let value_cols: Vec<(usize, String)> = file
            .headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !structural.contains(i))
            .map(|(i, h)| (i, h.clone()))
            .collect();

        let mut report = IngestReport::new(src);
        let mut out_ids = Vec::new();
        let mut times = Vec::new();
        let mut ends = Vec::new();
        let mut codes = Vec::new();
        let mut keys: Vec<Arc<str>> = Vec::new();
        let mut key_index: HashMap<String, u32> = HashMap::new();
        let mut columns: Vec<Vec<Value>> = vec![Vec::new(); value_cols.len()];
        let mut interners: Vec<HashMap<Arc<str>, ()>> = vec![HashMap::new(); value_cols.len()];
        let fixed_key = (concept_col.is_none() && type_col.is_none()).then(|| spec.scope.clone());

        let mut rdr = file.reader();
        let mut rec = csv::StringRecord::new();
        while file.next(&mut rdr, &mut rec)? {
            let r = &rec;
            report.rows_read += 1;
            let (t, e) = match spec.kind {
                TableKind::Attributes => (0, 0),
                TableKind::Event => match parse_timestamp(cell(r, time_col.unwrap())) {
                    Some(t) => (t, 0),
                    None => {
                        report.drop_row("unparseable time");
                        continue;
                    }
                },
                TableKind::Interval => {
                    match (parse_timestamp(cell(r, time_col.unwrap())), parse_timestamp(cell(r, end_col.unwrap()))) {
                        (Some(s), Some(e)) if e >= s => (s, e),
                        (Some(_), Some(_)) => {
                            report.drop_row("end before start");
                            continue;
                        }
                        _ => {
                            report.drop_row("unparseable time");
                            continue;
                        }
                    }
                }
            };
            let key = match (&fixed_key, concept_col, type_col) {
                (Some(k), _, _) => Some(k.clone()),
                (None, Some(c), _) => normalize_key(cell(r, c)),
                (None, None, Some(c)) => Some(cell(r, c).to_string()).filter(|s| !s.is_empty()),
                _ => None,
            };
            let code = match key {
                Some(k) if spec.kind != TableKind::Attributes => {
                    let next = keys.len() as u32;
                    *key_index.entry(k.clone()).or_insert_with(|| {
                        keys.push(Arc::from(k.as_str()));
                        next
                    })
                }
                Some(_) => 0,
                None => {
                    report.drop_row(if concept_col.is_some() { "missing concept id" } else { "missing type" });
                    continue;
                }
            };
            let row_ids = ids.ids(r);
            if row_ids.is_empty() {
                report.drop_row(if ids.direct.is_some() { "missing trajectory id" } else { "no join match" });
                continue;
            }
            for id in row_ids {
                let Some(id) = parse_id(id) else {
                    report.drop_row("invalid trajectory id");
                    continue;
                };
                out_ids.push(id);
                times.push(t);
                if spec.kind == TableKind::Interval {
                    ends.push(e);
                }
                codes.push(code);
                for (j, (ci, _)) in value_cols.iter().enumerate() {
                    let v = match Value::infer(cell(r, *ci)) {
                        Value::Text(s) => Value::Text(intern(&mut interners[j], s)),
                        v => v,
                    };
                    columns[j].push(v);
                }
            }
        }
        if spec.kind == TableKind::Attributes {
            keys.push(Arc::from(spec.scope.as_str()));
        }

        // Canonical order: (trajectory, time, source order).
        let n = out_ids.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by_key(|&i| (out_ids[i], times[i], i));
        let sorted = perm.iter().enumerate().all(|(a, &b)| a == b);
        let permute_i64 = |v: &[i64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let (out_ids, times, ends, codes, order) = if sorted {
            (out_ids, times, ends, codes, (0..n as u64).collect())
        } else {
            (
                permute_i64(&out_ids),
                permute_i64(&times),
                if ends.is_empty() { ends } else { permute_i64(&ends) },
                perm.iter().map(|&i| codes[i]).collect(),
                perm.iter().map(|&i| i as u64).collect(),
            )
        };
        let columns = value_cols
            .into_iter()
            .zip(columns)
            .map(|((_, name), mut col)| {
                let col = if sorted { col } else { perm.iter().map(|&i| std::mem::take(&mut col[i])).collect() };
                (name, col)
            })
            .collect();
        let times = if spec.kind == TableKind::Attributes { Vec::new() } else { times };
        Ok((
            Table {
                spec: spec.clone(),
                ids: out_ids,
                times,
                ends,
                type_codes: codes,
                type_keys: keys,
                order,
                joined: ids.direct.is_none(),
                columns,
            },
            report,
        ))
    }

    fn vocabularies(&self) -> Result<BTreeMap<String, BTreeMap<String, String>>, DatasetError> {
        let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for v in &self.spec.vocabularies {
            let file = self.read(&v.source)?;
            let id = file.require(&v.source, &v.concept_id_field)?;
            let name = file.require(&v.source, &v.concept_name_field)?;
            let scope_col = match &v.scope {
                VocabularyScope::Field { field, .. } => Some(file.require(&v.source, field)?),
                VocabularyScope::Fixed(_) => None,
            };
            let mut rdr = file.reader();
            let mut rec = csv::StringRecord::new();
            while file.next(&mut rdr, &mut rec)? {
                let r = &rec;
                let Some(key) = normalize_key(cell(r, id)) else { continue };
                let scope = match (&v.scope, scope_col) {
                    (VocabularyScope::Fixed(s), _) => s.clone(),
                    (VocabularyScope::Field { scopes, .. }, Some(c)) => {
                        let s = cell(r, c);
                        match scopes.iter().find(|x| x.as_str() == s) {
                            Some(x) => x.clone(),
                            None => continue,
                        }
                    }
                    _ => continue,
                };
                out.entry(scope).or_default().entry(key).or_insert_with(|| cell(r, name).to_string());
            }
        }
        Ok(out)
    }
}

fn intern(pool: &mut HashMap<Arc<str>, ()>, s: Arc<str>) -> Arc<str> {
    if let Some((k, _)) = pool.get_key_value(&s) {
        return k.clone();
    }
    pool.insert(s.clone(), ());
    s
}

/// Reads every table and vocabulary of `spec` from its root directory.
pub fn ingest(spec: &DatasetSpec) -> Result<Dataset, DatasetError> {
    let loader = Loader { spec, digests: Default::default() };
    let loaded: Vec<(Table, IngestReport)> =
        spec.tables.par_iter().map(|t| loader.table(t)).collect::<Result<_, _>>()?;
    let vocabulary = loader.vocabularies()?;
    let (tables, report): (Vec<Table>, Vec<IngestReport>) = loaded.into_iter().unzip();

    let mut bounds: BTreeMap<TrajectoryId, Option<(i64, i64)>> = BTreeMap::new();
    for t in &tables {
        for i in 0..t.len() {
            let slot = bounds.entry(t.ids[i]).or_insert(None);
            let (lo, hi) = match t.kind() {
                TableKind::Attributes => continue,
                TableKind::Event => (t.times[i], t.times[i]),
                TableKind::Interval => (t.times[i], t.ends[i]),
            };
            *slot = Some(match *slot {
                Some((a, b)) => (a.min(lo), b.max(hi)),
                None => (lo, hi),
            });
        }
    }
    let (trajectories, time_bounds) = bounds.into_iter().unzip();

    let mut h = Sha256::new();
    h.update(spec.canonical.as_bytes());
    for (source, digest) in loader.digests.lock().unwrap().iter() {
        h.update(source.as_bytes());
        h.update(digest.as_bytes());
    }
    let fingerprint = hex::encode(h.finalize());

    let mut ds = Dataset {
        spec: spec.clone(),
        tables,
        vocabulary,
        trajectories,
        time_bounds,
        fingerprint,
        report,
        catalog: Vec::new(),
    };
    ds.catalog = build_catalog(&ds);
    Ok(ds)
}

impl Dataset {
    /// Loads a specification file and ingests the files it names.
    pub fn open(spec_path: &Path) -> Result<Dataset, DatasetError> {
        let spec = super::load_spec(spec_path)?;
        ingest(&spec)
    }
}
