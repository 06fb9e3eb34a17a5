//! Acceptance suite. One line per criterion; exits non-zero when any criterion fails.
//!
//! Run with `cargo test -p skintone-core --test acceptance`.

mod agreement;
mod descriptors;
mod pipeline;
mod scoring;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

/// Outcome detail shown next to the verdict.
pub type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

/// Fail with a formatted message unless `cond` holds.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        // Negated so a NaN comparison fails the check.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "descriptor oracles", budget: secs(30), run: descriptors::oracle_suite },
        Criterion { name: "quantization", budget: secs(5), run: descriptors::quantization },
        Criterion { name: "ordinal loss", budget: secs(10), run: scoring::ordinal_loss },
        Criterion { name: "metrics monte carlo", budget: secs(30), run: scoring::random_metrics },
        Criterion { name: "agreement", budget: secs(5), run: agreement::agreement },
        Criterion { name: "leakage IMG vs IND", budget: secs(180), run: pipeline::leakage },
        Criterion { name: "split invariants", budget: secs(30), run: pipeline::split_invariants },
        Criterion { name: "end-to-end sanity", budget: secs(180), run: pipeline::end_to_end },
        Criterion { name: "determinism", budget: secs(360), run: pipeline::determinism },
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; over budget {:?}", c.budget)),
            other => other,
        };
        let (verdict, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{verdict} {:<22} {:>7.2}s  {detail}", c.name, elapsed.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
