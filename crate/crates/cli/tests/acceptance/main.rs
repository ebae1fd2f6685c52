//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Thresholds are the constants below.

#[path = "../../../core/tests/support/oracle.rs"]
mod oracle;

mod assistant;
mod categories;
mod corpus;
mod properties;
mod throughput;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use tempoql::dataset::Dataset;
use tempoql::store::QueryStore;

/// Relative tolerance for floating-point comparisons against oracles.
pub const FLOAT_RTOL: f64 = 1e-9;
pub const CATEGORY_BUDGET_SECS: f64 = 60.0;
pub const CATEGORY_STAYS: usize = 1_000;
pub const PROPERTY_MIN_CASES: usize = 1_000;
pub const TOKEN_RATIO_FLOOR: f64 = 4.0;
pub const THROUGHPUT_BUDGET_SECS: f64 = 60.0;
pub const PEAK_MEMORY_CEILING_BYTES: u64 = 4 << 30;
pub const SCALING_SLOPE_CEILING: f64 = 1.5;
pub const STORE_EQUIVALENCE_QUERIES: usize = 20;

pub type Outcome = Result<String, String>;

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> (Dataset, QueryStore) {
    let dir = root().join("fixtures").join(name);
    let ds = Dataset::open(&dir.join("spec.json")).unwrap_or_else(|e| panic!("{name}: {e}"));
    let store = QueryStore::load(&dir.join("store.json")).unwrap_or_else(|e| panic!("{name}: {e}"));
    (ds, store)
}

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes a filter; run only matching criteria.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("corpus parse coverage", corpus::parse_coverage),
        ("twelve-category oracle suite", categories::run),
        ("aggregation property suite", properties::run),
        ("conciseness token ratio", corpus::token_ratio),
        ("throughput floor", throughput::run),
        ("assistant privacy sentinel", assistant::privacy),
        ("assistant loop with scripted mock", assistant::mock_loop),
        ("store equivalence", corpus::store_equivalence),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
