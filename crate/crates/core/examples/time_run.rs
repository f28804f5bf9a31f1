//! Wall-clock probe: times a slice of a desk-scale run to size experiment
//! batches for the available hardware.

use cdrlab_core::strategies::{PhaseOrdering, RunSpec, StrategyKind, StrategyRun};

fn main() {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_000);
    let mut spec = RunSpec::desk("probe", StrategyKind::Randomized, PhaseOrdering::Tln, 0);
    spec.total_budget = steps;
    let mut run = StrategyRun::new(spec).unwrap();
    let t0 = std::time::Instant::now();
    let artifacts = run.run_to_completion().unwrap();
    let dt = t0.elapsed();
    let per_step = dt.as_secs_f64() / steps as f64;
    println!(
        "{steps} steps in {:.2}s ({:.2} us/step) -> 400k-step run ~ {:.1}s; rows: {} training, {} eval",
        dt.as_secs_f64(),
        per_step * 1e6,
        per_step * 400_000.0,
        artifacts.training.len(),
        artifacts.evals.len()
    );
}
