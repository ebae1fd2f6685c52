use std::path::PathBuf;

use tempoql::eval::{evaluate_text, StoreBindings};
use tempoql::lang::{parse, unparse};
use tempoql::tokens::count_tokens;

use crate::{fixture, root, Outcome, STORE_EQUIVALENCE_QUERIES, TOKEN_RATIO_FLOOR};

pub struct Entry {
    pub id: String,
    pub text: String,
    pub fixture: Option<String>,
}

fn category_files(ext: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(root().join("corpus/categories"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .collect();
    files.sort();
    files
}

pub fn entries() -> Vec<Entry> {
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root().join("corpus/queries.json")).unwrap()).unwrap();
    let mut out: Vec<Entry> = json
        .as_array()
        .unwrap()
        .iter()
        .map(|q| Entry {
            id: q["id"].as_str().unwrap().into(),
            text: q["text"].as_str().unwrap().into(),
            fixture: q["fixture"].as_str().map(String::from),
        })
        .collect();
    for p in category_files("tql") {
        out.push(Entry {
            id: p.file_stem().unwrap().to_string_lossy().into(),
            text: std::fs::read_to_string(&p).unwrap(),
            fixture: Some("synthetic-mimic".into()),
        });
    }
    out
}

pub fn parse_coverage() -> Outcome {
    let fixtures = [("synthetic-mimic", fixture("synthetic-mimic")), ("synthetic-omop", fixture("synthetic-omop"))];
    let all = entries();
    let (mut parsed, mut round_tripped, mut evaluated, mut with_fixture) = (0, 0, 0, 0);
    let mut problems = Vec::new();
    for e in &all {
        let ast = match parse(&e.text) {
            Ok(a) => a,
            Err(err) => {
                problems.push(format!("{}: {err}", e.id));
                continue;
            }
        };
        parsed += 1;
        let printed = unparse(&ast);
        match parse(&printed) {
            Ok(again) if again == ast => round_tripped += 1,
            _ => problems.push(format!("{}: does not round-trip via {printed:?}", e.id)),
        }
        let Some(name) = &e.fixture else { continue };
        with_fixture += 1;
        let (ds, store) = &fixtures.iter().find(|f| f.0 == name).unwrap_or_else(|| panic!("unknown fixture {name}")).1;
        match evaluate_text(&e.text, ds, &store.bindings()) {
            Ok(_) => evaluated += 1,
            Err(err) => problems.push(format!("{}: {err}", e.id)),
        }
    }
    let n = all.len();
    let detail = format!("{parsed}/{n} parse, {round_tripped}/{n} round-trip, {evaluated}/{with_fixture} evaluate on their fixture");
    if problems.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

pub fn token_ratio() -> Outcome {
    let mut ratios = Vec::new();
    for tql in category_files("tql") {
        let sql = tql.with_extension("sql");
        let a = count_tokens(&std::fs::read_to_string(&sql).map_err(|e| format!("{}: {e}", sql.display()))?);
        let b = count_tokens(&std::fs::read_to_string(&tql).unwrap());
        ratios.push(a as f64 / b as f64);
    }
    if ratios.len() != 12 {
        return Err(format!("expected 12 query pairs, found {}", ratios.len()));
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let (lo, hi) = ratios.iter().fold((f64::MAX, f64::MIN), |(a, b), r| (a.min(*r), b.max(*r)));
    let detail = format!("mean SQL:TempoQL ratio {mean:.2} over 12 pairs (range {lo:.2}..{hi:.2}, floor {TOKEN_RATIO_FLOOR})");
    if mean >= TOKEN_RATIO_FLOOR {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Stores corpus queries under fresh names and checks that evaluating the
/// bare name equals evaluating `(name) with name as (text)`.
pub fn store_equivalence() -> Outcome {
    let fixtures = [("synthetic-mimic", fixture("synthetic-mimic")), ("synthetic-omop", fixture("synthetic-omop"))];
    let mut compared = 0;
    let mut rows = 0;
    for (i, e) in entries().iter().filter(|e| e.fixture.is_some()).take(STORE_EQUIVALENCE_QUERIES).enumerate() {
        let (ds, store) = &fixtures.iter().find(|f| Some(f.0) == e.fixture.as_deref()).unwrap().1;
        let name = format!("saved_{i}");
        let mut store = store.clone();
        store.upsert(&name, &e.text, None).map_err(|err| format!("{}: {err}", e.id))?;
        let bindings: StoreBindings = store.bindings();
        let by_name = evaluate_text(&name, ds, &bindings).map_err(|err| format!("{}: by name: {err}", e.id))?;
        let inlined = format!("({name})\nwith {name} as ({})", e.text);
        let by_binding = evaluate_text(&inlined, ds, &bindings).map_err(|err| format!("{}: inlined: {err}", e.id))?;
        if by_name.result != by_binding.result {
            return Err(format!("{}: stored and inlined results differ", e.id));
        }
        compared += 1;
        rows += by_name.result.len();
    }
    if compared < STORE_EQUIVALENCE_QUERIES {
        return Err(format!("only {compared} queries compared"));
    }
    Ok(format!("{compared} queries, {rows} rows identical"))
}
