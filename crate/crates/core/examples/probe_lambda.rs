//! Empirical probe for the consolidation-strength sweep: trains a few seeds
//! at selected strengths and prints the proxy-real medians, to check where
//! the sweep peaks before committing to the full grid.

use cdrlab_core::evalkit::{median, EvalEnv, EvalRecord};
use cdrlab_core::strategies::{PhaseOrdering, RunSpec, StrategyKind, StrategyRun};

fn final_mean(records: &[EvalRecord], env: EvalEnv, f: impl Fn(&EvalRecord) -> f64) -> f64 {
    let last_t = records.iter().map(|r| r.timestep).max().unwrap();
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.timestep == last_t && r.eval_env == env)
        .map(f)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() {
    let total: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400_000);
    let pretrain: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let seeds: u64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(3);
    let lambdas: Vec<f64> = std::env::args()
        .nth(4)
        .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![1.0, 500.0, 50_000.0]);
    let strategy = std::env::args()
        .nth(5)
        .map(|s| StrategyKind::parse(&s).unwrap())
        .unwrap_or(StrategyKind::CdrEwc);
    let ordering = std::env::args()
        .nth(6)
        .map(|s| PhaseOrdering::parse(&s).unwrap())
        .unwrap_or(PhaseOrdering::Tln);
    println!(
        "probe: strategy {} ordering {} total {total} pretrain {pretrain} seeds {seeds}",
        strategy.as_str(),
        ordering.as_str()
    );

    let t0 = std::time::Instant::now();
    for &lambda in &lambdas {
        let mut rep = Vec::new();
        let mut d = Vec::new();
        for seed in 0..seeds {
            let mut spec = RunSpec::desk("probe", strategy, ordering, seed);
            spec.total_budget = total;
            spec.pretrain_budget = pretrain;
            spec.ewc.lambda = lambda;
            spec.eval_fraction = 1.0;
            let mut run = StrategyRun::new(spec).unwrap();
            let evals = run.run_to_completion().unwrap().evals;
            rep.push(final_mean(&evals, EvalEnv::ProxyReal, |r| r.r_ep));
            d.push(final_mean(&evals, EvalEnv::ProxyReal, |r| r.d_tgt));
        }
        let per_seed: Vec<String> = rep.iter().map(|r| format!("{r:.1}")).collect();
        println!(
            "lambda {:>8}: proxy r_ep median {:8.2} | proxy d_tgt median {:.4} | per-seed r_ep [{}]",
            lambda,
            median(&rep),
            median(&d),
            per_seed.join(", ")
        );
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
}
