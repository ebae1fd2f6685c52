use std::path::Path;

use serde_json::{json, Value as Json};
use tempoql::dataset::Dataset;
use tempoql::eval::evaluate_text;
use tempoql::lang::parse;
use tempoql::synth::{generate_mimic, MimicConfig};
use tempoql_assistant::{run_tool_loop, ChatTurn, Flow, ScriptedProvider, ToolCall, SEARCH_TOOL};

use crate::{fixture, Outcome};

const TEXT_SENTINEL: &str = "QX7SENTINEL";
const NUMBER_SENTINEL: &str = "987654.125";
const TIME_SENTINEL: &str = "2444-04-04 04:44:44";
/// Substrings whose presence anywhere in provider traffic counts as a leak.
const LEAK_MARKERS: [&str; 4] = ["QX7SENTINEL", "987654", "2444-04-04", "2444-01-01"];

/// Non-structural columns of each source file, by how they are overwritten.
const TEXT_COLUMNS: [&str; 6] = ["gender", "first_careunit", "value", "valueuom", "flag", "icd_code"];
const NUMBER_COLUMNS: [&str; 6] = ["anchor_age", "los", "valuenum", "labevent_id", "seq_num", "icd_version"];
const TIME_COLUMNS: [&str; 7] = ["dod", "intime", "outtime", "charttime", "starttime", "endtime", "anchor_year"];
const DATA_FILES: [&str; 6] = [
    "hosp/patients.csv",
    "icu/icustays.csv",
    "icu/chartevents.csv",
    "hosp/labevents.csv",
    "icu/procedureevents.csv",
    "hosp/diagnoses_icd.csv",
];

fn call(id: &str, args: Json) -> ChatTurn {
    ChatTurn::calling(vec![ToolCall { id: id.into(), name: SEARCH_TOOL.into(), arguments: args }])
}

/// Overwrites every row value and timestamp with a sentinel, keeping only ids,
/// join keys and concept codes.
fn poison(path: &Path) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&headers).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let row: Vec<&str> = headers
            .iter()
            .zip(rec.iter())
            .map(|(h, v)| match h {
                "anchor_year" => "2444",
                h if TIME_COLUMNS.contains(&h) => TIME_SENTINEL,
                h if TEXT_COLUMNS.contains(&h) => TEXT_SENTINEL,
                h if NUMBER_COLUMNS.contains(&h) => NUMBER_SENTINEL,
                _ => v,
            })
            .collect();
        w.write_record(row).unwrap();
    }
    std::fs::write(path, w.into_inner().unwrap()).unwrap();
}

fn assert_clean(label: &str, text: &str) -> Result<(), String> {
    match LEAK_MARKERS.iter().find(|m| text.contains(*m)) {
        Some(m) => Err(format!("{label} contains {m}")),
        None => Ok(()),
    }
}

fn flows() -> [Flow; 3] {
    [
        Flow::Generate { instruction: "summarize every measurement for each stay".into() },
        Flow::Explain { query: "mean {Heart Rate; scope = chartevents} every 1 day".into() },
        Flow::Fix { query: "min {Heart Rate} from".into(), error: "expected an expression".into() },
    ]
}

pub fn privacy() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    generate_mimic(dir.path(), &MimicConfig { stays: 60, seed: 5, ..MimicConfig::default() }).unwrap();
    for f in DATA_FILES {
        poison(&dir.path().join(f));
    }
    let ds = Dataset::open(&dir.path().join("spec.json")).map_err(|e| e.to_string())?;
    // The sentinels must really be what the engine sees.
    for (q, marker) in [("{Gender}", TEXT_SENTINEL), ("{Heart Rate; scope = chartevents; value = valuenum}", "987654"), ("{Admit Time}", "2444-04-04")] {
        let r = evaluate_text(q, &ds, &Default::default()).map_err(|e| format!("{q}: {e}"))?;
        if !r.result.values().iter().any(|v| v.render().contains(marker)) {
            return Err(format!("sentinel {marker} missing from {q}"));
        }
    }
    let script = vec![
        call("s1", json!({"query": ""})),
        call("s2", json!({"query": "/.*/"})),
        call("s3", json!({"query": "/[0-9]/", "scope": "chartevents"})),
        call("s4", json!({"query": "sentinel"})),
        call("s5", json!({"query": "rate", "scope": "Lab"})),
        ChatTurn::assistant("```tempoql\nmean {Heart Rate; scope = chartevents} every 1 day\n```"),
    ];
    let mut requests = 0;
    for flow in flows() {
        let mock = ScriptedProvider::new(script.clone());
        let out = run_tool_loop(&flow, &ds.spec, &ds.catalog, &mock, "mock", 8).map_err(|e| e.to_string())?;
        if out.tool_call_count != 5 {
            return Err(format!("expected 5 searches, saw {}", out.tool_call_count));
        }
        for body in mock.requests() {
            assert_clean("request", &body)?;
            requests += 1;
        }
        assert_clean("outcome", &serde_json::to_string(&out).unwrap())?;
    }
    Ok(format!("3 flows, {requests} provider requests, 5 searches each: no sentinel reached the provider"))
}

pub fn mock_loop() -> Outcome {
    let (ds, store) = fixture("synthetic-mimic");
    let answers = [
        "Hourly respiratory rate:\n```tempoql\nmean {Respiratory Rate; scope = chartevents} from #now - 1 h to #now every 1 h\n```",
        "1. Finds heart rate readings.\n2. Averages them per day.\n\nEquivalent form:\n```TempoQL\nmean {Heart Rate; scope = chartevents} from #now - 1 day to #now every 1 day\n```",
        "The window needs bounds.\n```tempoql\nmin {Heart Rate; scope = chartevents} from #mintime to #maxtime\n```",
    ];
    let mut summary = Vec::new();
    for (flow, answer) in flows().into_iter().zip(answers) {
        let name = match &flow {
            Flow::Generate { .. } => "generate",
            Flow::Explain { .. } => "explain",
            Flow::Fix { .. } => "fix",
        };
        let mock = ScriptedProvider::new(vec![
            call("c1", json!({"query": "rate", "scope": "chartevents"})),
            ChatTurn::assistant(answer),
        ]);
        let out = run_tool_loop(&flow, &ds.spec, &ds.catalog, &mock, "mock", 6).map_err(|e| format!("{name}: {e}"))?;
        if out.tool_call_count != 1 || !out.diagnostics.is_empty() {
            return Err(format!("{name}: tool calls {}, diagnostics {:?}", out.tool_call_count, out.diagnostics));
        }
        let tool_turn = out.transcript.iter().find(|t| t.tool_call_id.as_deref() == Some("c1")).ok_or(format!("{name}: no tool turn"))?;
        let results: Json = serde_json::from_str(&tool_turn.content).map_err(|e| e.to_string())?;
        if results["results"].as_array().is_none_or(|r| r.is_empty()) {
            return Err(format!("{name}: empty search result"));
        }
        if out.queries.len() != 1 || !out.queries[0].valid {
            return Err(format!("{name}: extracted {:?}", out.queries));
        }
        parse(&out.queries[0].text).map_err(|e| format!("{name}: {e}"))?;
        evaluate_text(&out.queries[0].text, &ds, &store.bindings()).map_err(|e| format!("{name}: {e}"))?;
        summary.push(name);
    }
    // An unparsable suggestion is reported rather than passed on as valid.
    let mock = ScriptedProvider::new(vec![ChatTurn::assistant("```tempoql\nmean {Heart Rate from\n```")]);
    let out = run_tool_loop(&flows()[0], &ds.spec, &ds.catalog, &mock, "mock", 6).map_err(|e| e.to_string())?;
    if out.queries.len() != 1 || out.queries[0].valid || out.queries[0].error.is_none() {
        return Err("an invalid candidate was not flagged".into());
    }
    Ok(format!("{} flows searched, answered, and produced queries that parse and evaluate; invalid candidate flagged", summary.join("/")))
}
