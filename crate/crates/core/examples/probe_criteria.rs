//! Empirical probe for sizing the acceptance experiments: trains small
//! batches of runs at a candidate budget and prints the directional
//! comparisons the acceptance gate checks.

use cdrlab_core::evalkit::{median, EvalEnv, EvalRecord};
use cdrlab_core::strategies::{PhaseOrdering, RunSpec, StrategyKind, StrategyRun};

fn final_metrics(records: &[EvalRecord], env: EvalEnv) -> (f64, f64, f64) {
    let last_t = records.iter().map(|r| r.timestep).max().unwrap();
    let rows: Vec<&EvalRecord> = records
        .iter()
        .filter(|r| r.timestep == last_t && r.eval_env == env)
        .collect();
    let m = |f: &dyn Fn(&EvalRecord) -> f64| {
        let v: Vec<f64> = rows.iter().map(|r| f(r)).collect();
        median(&v)
    };
    (m(&|r| r.r_ep), m(&|r| r.continuity), m(&|r| r.d_tgt))
}

fn run(strategy: StrategyKind, ordering: PhaseOrdering, seed: u64, total: usize, pretrain: usize, lambda: f64) -> Vec<EvalRecord> {
    let mut spec = RunSpec::desk("probe", strategy, ordering, seed);
    spec.total_budget = total;
    spec.pretrain_budget = pretrain;
    spec.ewc.lambda = lambda;
    // Probing only needs the final snapshot; skip the mid-run cadence.
    spec.eval_fraction = 1.0;
    let mut r = StrategyRun::new(spec).unwrap();
    r.run_to_completion().unwrap().evals
}

fn main() {
    let total: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(80_000);
    let pretrain: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let seeds: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(3);

    let t0 = std::time::Instant::now();
    for strategy in [StrategyKind::Ideal, StrategyKind::Randomized] {
        let mut ideal_rep = Vec::new();
        let mut proxy_rep = Vec::new();
        let mut ideal_c = Vec::new();
        let mut proxy_c = Vec::new();
        let mut proxy_d = Vec::new();
        for seed in 0..seeds {
            let evals = run(strategy, PhaseOrdering::Tln, seed, total, pretrain, 5e3);
            let (ri, ci, _di) = final_metrics(&evals, EvalEnv::IdealSim);
            let (rp, cp, dp) = final_metrics(&evals, EvalEnv::ProxyReal);
            ideal_rep.push(ri);
            proxy_rep.push(rp);
            ideal_c.push(ci);
            proxy_c.push(cp);
            proxy_d.push(dp);
        }
        println!(
            "{:>12}: ideal r_ep {:8.2} | proxy r_ep {:8.2} | ideal C {:6.2} | proxy C {:6.2} | proxy d_tgt {:.4}",
            strategy.as_str(),
            median(&ideal_rep),
            median(&proxy_rep),
            median(&ideal_c),
            median(&proxy_c),
            median(&proxy_d),
        );
        let per_seed: Vec<String> = proxy_d.iter().map(|d| format!("{d:.4}")).collect();
        println!("{:>12}  per-seed proxy d_tgt: [{}]", "", per_seed.join(", "));
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
}
