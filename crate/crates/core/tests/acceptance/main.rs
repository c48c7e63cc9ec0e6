//! Acceptance suite.
//!
//! Runs every criterion, prints one PASS/FAIL line each and exits non-zero
//! if any fails or overruns its time budget. Criterion numbers given as
//! arguments select a subset:
//!
//! ```text
//! cargo test -p radgen-core --test acceptance -- 2 5
//! ```

mod common;
mod determinism;
mod docs;
mod encoding;
mod golden;
mod gradients;
mod masking;
mod metrics;
mod training;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Success carries a one-line summary of what was measured.
pub type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "documented substitution",
        budget: minutes(1),
        run: docs::substitution_is_documented,
    },
    Criterion {
        id: 2,
        name: "gradient correctness",
        budget: minutes(2),
        run: gradients::all_parameters_match_finite_differences,
    },
    Criterion {
        id: 3,
        name: "causal mask",
        budget: minutes(1),
        run: masking::future_tokens_do_not_leak,
    },
    Criterion {
        id: 4,
        name: "overfit sanity",
        budget: minutes(10),
        run: training::overfits_sixteen_examples,
    },
    Criterion {
        id: 5,
        name: "fusion benefit",
        budget: minutes(60),
        run: training::demographics_improve_bleu,
    },
    Criterion {
        id: 6,
        name: "BLEU oracle",
        budget: minutes(1),
        run: metrics::bleu_matches_brute_force,
    },
    Criterion {
        id: 7,
        name: "metric identities",
        budget: minutes(1),
        run: metrics::identities_hold,
    },
    Criterion {
        id: 8,
        name: "preprocessing golden corpus",
        budget: minutes(1),
        run: golden::golden_corpus_matches,
    },
    Criterion {
        id: 9,
        name: "determinism and checkpoints",
        budget: minutes(5),
        run: determinism::round_trip_and_corruption,
    },
    Criterion {
        id: 10,
        name: "demographic encoding",
        budget: minutes(1),
        run: encoding::boundaries_hold,
    },
];

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<String>()
        .cloned()
        .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panicked".into())
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| Err(panic_text(p)));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; exceeded budget of {:?}", c.budget)),
            other => other,
        };
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!(
            "acceptance {:>2} {:<28} {status} {:>8.2}s  {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
