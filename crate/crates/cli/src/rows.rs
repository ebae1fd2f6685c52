//! JSON rendering of result rows, shared by `run --format json` and the API.

use serde_json::{json, Map, Value as Json};
use tempoql::export::{header, iso_timestamp};
use tempoql::series::Data;
use tempoql::value::Value;

pub fn value_json(v: &Value) -> Json {
    match v {
        Value::Number(n) if n.is_finite() => json!(n),
        Value::Number(n) => json!(n.to_string()),
        Value::Text(s) => json!(s.as_ref()),
        Value::Boolean(b) => json!(b),
        Value::Timestamp(t) => json!(iso_timestamp(*t)),
        Value::Duration(ms) => json!(ms),
        Value::Missing => Json::Null,
    }
}

/// Rows `range` of `data` as objects keyed by the export column names.
pub fn json_rows(data: &Data, range: std::ops::Range<usize>) -> Vec<Json> {
    let cols = header(data);
    let values = data.values();
    range
        .map(|i| {
            let mut cells: Vec<Json> = Vec::with_capacity(cols.len());
            match data {
                Data::Scalar(_) => {}
                Data::Intervals(s) => {
                    cells.push(json!(s.ids()[i]));
                    cells.push(json!(iso_timestamp(s.starts()[i])));
                    cells.push(json!(iso_timestamp(s.ends()[i])));
                }
                _ => {
                    cells.push(json!(data.row_ids()[i]));
                    if let Some(t) = data.row_times() {
                        cells.push(json!(iso_timestamp(t[i])));
                    }
                }
            }
            cells.push(value_json(&values[i]));
            Json::Object(cols.iter().map(|c| c.to_string()).zip(cells).collect::<Map<_, _>>())
        })
        .collect()
}

pub fn all_rows(data: &Data) -> Vec<Json> {
    json_rows(data, 0..data.len())
}
