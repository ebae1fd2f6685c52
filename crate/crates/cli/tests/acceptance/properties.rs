use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempoql::eval::{evaluate_text, EvalErrorKind, StoreBindings};

use crate::oracle::*;
use crate::{Outcome, PROPERTY_MIN_CASES};

const RANDOM_EXTRA_CASES: u64 = 300;

fn check(seed: u64, case: &AggCase) -> Result<bool, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = random_data(&mut rng, 5, 24);
    let (_dir, ds) = data.open();
    let q = case.query();
    match (evaluate_text(&q, &ds, &StoreBindings::new()), expected(&data, case)) {
        (Ok(r), Ok(want)) => same_rows(&rows_of(&r.result), &want).map(|_| true).map_err(|e| format!("{q}: {e}")),
        (Err(e), Err(_)) if e.kind == EvalErrorKind::Type => Ok(false),
        (Ok(_), Err(why)) => Err(format!("{q}: expected a type error ({why})")),
        (Err(e), _) => Err(format!("{q}: unexpected error {e}")),
    }
}

/// The full grid of function × target × bounds × timestep, one fresh random
/// dataset per case, followed by fully random cases.
pub fn run() -> Outcome {
    let bounds = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = -rng.random_range(1..8);
        [Bounds::FromTo(a, a + rng.random_range(1..8)), Bounds::Before, Bounds::After, Bounds::At]
    };
    let steps = [Step::Every { hours: 2, from_start: true }, Step::AtEvery, Step::Whole];
    let mut cases = Vec::new();
    for (f, func) in FUNCS.iter().enumerate() {
        let boolean = matches!(*func, "any" | "all");
        let mut targets = vec![if boolean { Target::EventsBool } else { Target::Events }];
        for m in MODES {
            targets.push(if boolean { Target::IntervalsBool(Some(m)) } else { Target::Intervals(Some(m)) });
        }
        for target in targets {
            for b in bounds() {
                for (s, step) in steps.iter().enumerate() {
                    // Alternate regular steps between the start attribute and #mintime.
                    let step = match step {
                        Step::Every { hours, .. } => Step::Every { hours: *hours, from_start: (f + s) % 2 == 0 },
                        other => other.clone(),
                    };
                    cases.push(AggCase { func, target: target.clone(), bounds: b.clone(), step });
                }
            }
        }
    }
    let grid = cases.len();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..RANDOM_EXTRA_CASES {
        cases.push(random_case(&mut rng));
    }
    let (mut agreed, mut type_errors) = (0, 0);
    let mut mismatches = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        match check(10_000 + i as u64, case) {
            Ok(true) => agreed += 1,
            Ok(false) => type_errors += 1,
            Err(e) => mismatches.push(e),
        }
    }
    let total = cases.len();
    let detail = format!(
        "{total} cases ({grid} grid + {RANDOM_EXTRA_CASES} random): {agreed} value matches, {type_errors} agreed type errors, {} mismatches",
        mismatches.len()
    );
    if mismatches.is_empty() && total >= PROPERTY_MIN_CASES {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", mismatches.first().cloned().unwrap_or_default()))
    }
}
