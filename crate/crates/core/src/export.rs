//! Result export: a delimited file plus a JSON metadata sidecar.

use std::io::{self, Write};

use chrono::{DateTime, SecondsFormat};
use serde::Serialize;

use crate::series::Data;
use crate::value::Value;

/// ISO-8601 UTC rendering used in exports.
pub fn iso_timestamp(ms: i64) -> String {
    DateTime::from_timestamp_millis(ms)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::AutoSi, true))
        .unwrap_or_default()
}

fn cell(v: &Value) -> String {
    match v {
        Value::Timestamp(t) => iso_timestamp(*t),
        other => other.render(),
    }
}

/// Column names for `data`'s export.
pub fn header(data: &Data) -> Vec<&'static str> {
    match data {
        Data::Scalar(_) => vec!["value"],
        Data::Attributes(_) => vec!["trajectory_id", "value"],
        Data::Events(_) | Data::TimeSeries(_) => vec!["trajectory_id", "timestep", "value"],
        Data::Intervals(_) => vec!["trajectory_id", "start", "end", "value"],
    }
}

/// One record per row, matching [`header`]. Missing values are empty fields.
pub fn records(data: &Data) -> Vec<Vec<String>> {
    let values = data.values();
    match data {
        Data::Scalar(v) => vec![vec![cell(v)]],
        Data::Intervals(s) => (0..s.len())
            .map(|i| vec![s.ids()[i].to_string(), iso_timestamp(s.starts()[i]), iso_timestamp(s.ends()[i]), cell(&values[i])])
            .collect(),
        _ => {
            let ids = data.row_ids();
            let times = data.row_times();
            (0..values.len())
                .map(|i| {
                    let mut r = vec![ids[i].to_string()];
                    if let Some(t) = times {
                        r.push(iso_timestamp(t[i]));
                    }
                    r.push(cell(&values[i]));
                    r
                })
                .collect()
        }
    }
}

pub fn write_csv<W: Write>(data: &Data, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(data))?;
    for r in records(data) {
        w.write_record(&r)?;
    }
    w.flush()
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportMetadata<'a> {
    pub query: &'a str,
    pub spec_fingerprint: &'a str,
    pub kind: &'static str,
    pub rows: usize,
    pub columns: Vec<&'static str>,
    pub diagnostics: &'a [String],
}

pub fn metadata<'a>(query: &'a str, fingerprint: &'a str, data: &Data, diagnostics: &'a [String]) -> ExportMetadata<'a> {
    ExportMetadata {
        query,
        spec_fingerprint: fingerprint,
        kind: data.kind().label(),
        rows: data.len(),
        columns: header(data),
        diagnostics,
    }
}
