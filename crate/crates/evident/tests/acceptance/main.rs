//! Acceptance suite: runs every criterion and prints one PASS/FAIL line each.
//! Exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

mod e2e;
mod oracles;
mod suites;

pub type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient suite", suites::gradients),
        ("distribution suite", suites::distributions),
        ("metric-oracle suite", suites::metric_oracles),
        ("alignment suite", suites::alignment),
        ("refinement suite", suites::refinement),
        ("end-to-end synthetic ranking", e2e::end_to_end),
        ("readout ablation", e2e::readout_ablation),
        ("ring-band suite", e2e::ring_band),
        ("baseline parity", e2e::baselines),
        ("reproducibility", e2e::reproducibility),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if filter.as_ref().is_some_and(|f| *f != id && !name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let dt = t.elapsed();
        match res {
            Ok(d) => println!("criterion {id:>2} PASS  {name} [{dt:.1?}]: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{dt:.1?}]: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
