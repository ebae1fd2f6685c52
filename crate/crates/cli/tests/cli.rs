use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value as Json;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn spec() -> String {
    root().join("fixtures/synthetic-mimic/spec.json").display().to_string()
}

fn tempoql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempoql")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn age_query_exports_one_row_per_stay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("age.csv");
    let query = std::fs::read_to_string(root().join("corpus/categories/01_attributes.tql")).unwrap();
    let o = tempoql(&["run", "--dataset", &spec(), "--query", &query, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    let stays = std::fs::read_to_string(root().join("fixtures/synthetic-mimic/icu/icustays.csv")).unwrap().lines().count() - 1;
    assert_eq!(csv.lines().next(), Some("trajectory_id,value"));
    assert_eq!(csv.lines().count() - 1, stays);
    let meta: Json = serde_json::from_str(&std::fs::read_to_string(dir.path().join("age.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["rows"], stays);
    assert_eq!(meta["query"], query.as_str());
}

#[test]
fn errors_map_to_exit_codes() {
    let o = tempoql(&["run", "--dataset", &spec(), "--query", "min x from to"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("expected an expression"));
    assert!(stderr(&o).contains("^^"));

    assert_eq!(code(&tempoql(&["run", "--dataset", &spec()])), 2);
    assert_eq!(code(&tempoql(&["frobnicate"])), 2);
    assert_eq!(code(&tempoql(&["run", "--dataset", "/no/such/spec.json", "--query", "1"])), 3);
    let o = tempoql(&["run", "--dataset", &spec(), "--query", "1", "--out", "/no/such/dir/x.csv"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&tempoql(&["--help"])), 0);
}

#[test]
fn query_store_commands() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.json");
    let s = store.to_str().unwrap();
    let add = |name: &str, q: &str, force: bool| {
        let mut args = vec!["queries", "--store", s, "add", name, q];
        if force {
            args.push("--force");
        }
        tempoql(&args)
    };
    assert_eq!(code(&add("hr", "{Heart Rate; scope = chartevents}", false)), 0);
    let o = add("hr", "{Gender}", false);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--force"));
    assert_eq!(code(&add("hr", "mean {Heart Rate; scope = chartevents} from #mintime to #maxtime", true)), 0);
    assert_eq!(code(&add("broken", "min x from to", false)), 1);
    assert_eq!(code(&add("two words", "1", false)), 2);

    let o = tempoql(&["queries", "--store", s, "list", "--json"]);
    let list: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert!(list[0]["query"].as_str().unwrap().starts_with("mean"));

    let o = tempoql(&["run", "--dataset", &spec(), "--name", "hr", "--store", s, "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["metadata"]["kind"], "attributes");

    assert_eq!(code(&tempoql(&["queries", "--store", s, "rm", "hr"])), 0);
    assert_eq!(code(&tempoql(&["queries", "--store", s, "rm", "hr"])), 2);
}

#[test]
fn catalog_and_profile_commands() {
    let o = tempoql(&["catalog", "search", "resp", "--dataset", &spec(), "--scope", "chartevents", "--json"]);
    assert_eq!(code(&o), 0);
    let r: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["entries"].as_array().unwrap().iter().any(|e| e["name"] == "Respiratory Rate"));

    let o = tempoql(&["catalog", "search", "resp", "--dataset", &spec()]);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("name"));
    assert!(table.contains("Respiratory Rate"));

    let q = "last {Heart Rate; scope = chartevents} before #now every 1 day";
    let o = tempoql(&["profile", "--dataset", &spec(), "--query", q]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p: Json = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(p["result"]["kind"], "time_series");
    assert_eq!(p["subqueries"].as_array().unwrap().len(), 2);
}
