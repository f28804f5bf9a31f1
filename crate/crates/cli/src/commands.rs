//! Entry points behind each CLI verb: argument resolution, experiment
//! dispatch, and the checkpoint inspector.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use cdrlab_core::env::ReacherEnv;
use cdrlab_core::evalkit::{evaluate, mean_std, EvalEnv};
use cdrlab_core::randomization::{proxy_real_params, RandomizationSet, RandomizedEnv};
use cdrlab_core::rng::{derive_seed, stream};
use cdrlab_core::snapshot::Checkpoint;

use crate::config::ExperimentConfig;
use crate::orchestrate::{importance_matrix, run_experiment, sweep_matrix, train_matrix};
use crate::report::generate_report;

/// Shared flags of the experiment verbs.
#[derive(Clone, Debug, Default)]
pub struct RunArgs {
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
    pub seeds: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub workers: Option<usize>,
}

/// Output directory: `--out` wins, then `CDRLAB_OUT`, then `./cdrlab_out`.
pub fn resolve_out(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(env) = std::env::var_os("CDRLAB_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("cdrlab_out")
}

fn resolve_workers(flag: Option<usize>) -> usize {
    flag.filter(|&w| w > 0).unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    })
}

/// Loads the configuration with overrides and the `--seeds` shortcut applied.
pub fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(args.config.as_deref(), &args.set)?;
    if let Some(n) = args.seeds {
        cfg.seeds = n;
        cfg.validate()?;
    }
    Ok(cfg)
}

pub fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out = resolve_out(args.out.as_deref());
    let runs = train_matrix(&cfg)?;
    run_experiment(&cfg, "train", &out, runs, args.force, resolve_workers(args.workers))
}

pub fn cmd_sweep_lambda(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out = resolve_out(args.out.as_deref());
    let runs = sweep_matrix(&cfg)?;
    run_experiment(&cfg, "sweep-lambda", &out, runs, args.force, resolve_workers(args.workers))
}

pub fn cmd_importance(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out = resolve_out(args.out.as_deref());
    let runs = importance_matrix(&cfg)?;
    run_experiment(&cfg, "importance", &out, runs, args.force, resolve_workers(args.workers))
}

pub fn cmd_report(out: Option<&Path>) -> Result<()> {
    let out = resolve_out(out);
    let summary = generate_report(&out)?;
    if summary.completed_runs == 0 {
        println!(
            "no completed runs in {}; wrote {}",
            out.display(),
            summary.report_dir.join("NO_RUNS").display()
        );
        return Ok(());
    }
    if !summary.skipped_runs.is_empty() {
        println!(
            "skipped {} incomplete run(s): {}",
            summary.skipped_runs.len(),
            summary.skipped_runs.join(", ")
        );
    }
    print!("{}", summary.table);
    println!(
        "report for {} completed run(s) written to {}",
        summary.completed_runs,
        summary.report_dir.display()
    );
    Ok(())
}

/// Flags of the checkpoint inspector.
#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub env: String,
    pub episodes: usize,
    pub seed: u64,
    pub squared_distance: bool,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let run = checkpoint.restore()?;
    let eval_env = EvalEnv::parse(&args.env)?;

    let inner = ReacherEnv::new(run.spec().arm.clone(), run.spec().episode.clone())?;
    let env_idx = match eval_env {
        EvalEnv::IdealSim => 0u64,
        EvalEnv::ProxyReal => 1u64,
    };
    let env_seed = derive_seed(args.seed, &[stream::EVAL, env_idx, 0]);
    let mut env = match eval_env {
        EvalEnv::IdealSim => RandomizedEnv::new(inner, RandomizationSet::none(), env_seed)?,
        EvalEnv::ProxyReal => RandomizedEnv::fixed(inner, proxy_real_params(), env_seed)?,
    };

    println!(
        "{}: {} ({} of {} phases trained, step {})",
        args.checkpoint.display(),
        run.label(),
        run.phase_index(),
        run.plan().len(),
        run.global_step()
    );
    let metrics = evaluate(&run.policy, &mut env, args.episodes, args.squared_distance)?;
    println!("{} episodes on {}:", metrics.len(), eval_env);
    println!("{:>8}  {:>12}  {:>12}  {:>12}", "episode", "r_ep", "continuity", "d_tgt");
    for (i, m) in metrics.iter().enumerate() {
        println!("{i:>8}  {:>12.3}  {:>12.3}  {:>12.4}", m.r_ep, m.continuity, m.d_tgt);
    }
    let col = |f: &dyn Fn(&cdrlab_core::evalkit::EpisodeMetrics) -> f64| -> Vec<f64> {
        metrics.iter().map(|m| f(m)).collect()
    };
    let r = mean_std(&col(&|m| m.r_ep));
    let c = mean_std(&col(&|m| m.continuity));
    let d = mean_std(&col(&|m| m.d_tgt));
    println!(
        "{:>8}  {:>5.3} ± {:.3}  {:>5.3} ± {:.3}  {:>5.4} ± {:.4}",
        "mean", r.mean, r.std, c.mean, c.std, d.mean, d.std
    );
    Ok(())
}
