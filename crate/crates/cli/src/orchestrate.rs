//! Experiment orchestration: expands a configuration into a run matrix,
//! executes runs (in parallel if asked), and persists every phase boundary
//! so interrupted experiments resume exactly where they stopped.
//!
//! Directory layout under `--out`:
//!
//! ```text
//! out/
//!   manifest.json           experiment identity: command, config hash, runs
//!   config.resolved.toml    the configuration after overrides
//!   runs/<run_id>/
//!     manifest.json         status, phases done, phase boundaries
//!     phase_NNN.*.csv       per-phase log fragments (removed on completion)
//!     checkpoint_NNN.json   phase-boundary checkpoints (removed on completion)
//!     training.csv          merged logs, written when the run completes
//!     evals.csv
//!     draws.csv
//!     checkpoint.json       the trained agent (final phase boundary)
//! ```
//!
//! A phase is durable once its `checkpoint_NNN.json` exists; fragments are
//! written first, so a checkpoint's presence implies its logs are on disk.
//! Every file lands via write-to-temp-then-rename, which keeps partially
//! written files invisible to a resume scan.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cdrlab_core::randomization::RandKind;
use cdrlab_core::snapshot::Checkpoint;
use cdrlab_core::strategies::{
    build_schedule, single_param_importance_preset, DrawRow, PhaseOutcome, PhaseOrdering,
    StrategyKind, StrategyRun, TrainingRow,
};
use cdrlab_core::evalkit::EvalRecord;

use crate::config::ExperimentConfig;

/// The consolidation strengths covered by `sweep-lambda`: {1, 5} x 10^0..4.
pub const LAMBDA_GRID: [f64; 10] =
    [1.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0, 5000.0, 10000.0, 50000.0];

/// One cell of an experiment's run matrix. Carries everything needed to
/// rebuild the run besides the shared configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub run_id: String,
    pub strategy: StrategyKind,
    pub ordering: PhaseOrdering,
    pub seed: u64,
    /// Consolidation-strength override (lambda sweep cells).
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Train a single-randomization phase instead of the strategy schedule
    /// (importance-study cells).
    #[serde(default)]
    pub single: Option<RandKind>,
    /// Total-budget override (importance-study cells).
    #[serde(default)]
    pub total_budget: Option<usize>,
}

impl PlannedRun {
    fn plain(strategy: StrategyKind, ordering: PhaseOrdering, seed: u64) -> Self {
        PlannedRun {
            run_id: format!("{}-{}-s{}", strategy.as_str(), ordering.as_str(), seed),
            strategy,
            ordering,
            seed,
            lambda: None,
            single: None,
            total_budget: None,
        }
    }

    /// The strategy column this run writes into its logs.
    pub fn label(&self) -> String {
        if let Some(kind) = self.single {
            return format!("single_{}", kind_slug(kind));
        }
        match self.lambda {
            Some(l) => format!("{}_lam{:05}", self.strategy.as_str(), l as u64),
            None => self.strategy.as_str().to_string(),
        }
    }

    /// Constructs the fresh run driver for this cell.
    pub fn build(&self, cfg: &ExperimentConfig) -> Result<StrategyRun> {
        if let Some(kind) = self.single {
            let budget = self.total_budget.unwrap_or(cfg.budget.importance);
            let mut spec =
                cfg.run_spec(&self.run_id, StrategyKind::Ideal, self.ordering, self.seed)?;
            spec.total_budget = budget;
            let plan = single_param_importance_preset(kind, &spec.ranges, budget)?;
            return Ok(StrategyRun::with_plan_and_label(spec, plan, self.label())?);
        }
        let mut spec = cfg.run_spec(&self.run_id, self.strategy, self.ordering, self.seed)?;
        if let Some(l) = self.lambda {
            spec.ewc.lambda = l;
        }
        if let Some(t) = self.total_budget {
            spec.total_budget = t;
        }
        spec.validate()?;
        if self.lambda.is_some() {
            let plan = build_schedule(
                spec.strategy,
                spec.ordering,
                &spec.ranges,
                spec.total_budget,
                spec.pretrain_budget,
            )?;
            return Ok(StrategyRun::with_plan_and_label(spec, plan, self.label())?);
        }
        Ok(StrategyRun::new(spec)?)
    }
}

fn kind_slug(kind: RandKind) -> &'static str {
    match kind {
        RandKind::Torque => "torque",
        RandKind::Latency => "latency",
        RandKind::Noise => "noise",
    }
}

/// The `train` matrix: every configured strategy and seed; sequential
/// strategies run under every configured ordering, single-phase strategies
/// (which orderings cannot affect) only under the first.
pub fn train_matrix(cfg: &ExperimentConfig) -> Result<Vec<PlannedRun>> {
    let orderings = cfg.orderings()?;
    let mut runs = Vec::new();
    for strategy in cfg.strategies()? {
        let applicable: &[PhaseOrdering] =
            if strategy.is_sequential() { &orderings } else { &orderings[..1] };
        for &ordering in applicable {
            for seed in 0..cfg.seeds {
                runs.push(PlannedRun::plain(strategy, ordering, seed));
            }
        }
    }
    Ok(runs)
}

/// The `sweep-lambda` matrix: both consolidating strategies under both
/// configured orderings, at every grid strength, for every seed.
pub fn sweep_matrix(cfg: &ExperimentConfig) -> Result<Vec<PlannedRun>> {
    let mut runs = Vec::new();
    for strategy in [StrategyKind::CdrEwc, StrategyKind::CdrOnlineEwc] {
        for &ordering in &cfg.orderings()? {
            for &lambda in &LAMBDA_GRID {
                for seed in 0..cfg.seeds {
                    runs.push(PlannedRun {
                        run_id: format!(
                            "{}-{}-lam{:05}-s{}",
                            strategy.as_str(),
                            ordering.as_str(),
                            lambda as u64,
                            seed
                        ),
                        strategy,
                        ordering,
                        seed,
                        lambda: Some(lambda),
                        single: None,
                        total_budget: None,
                    });
                }
            }
        }
    }
    Ok(runs)
}

/// The `importance` matrix: each randomization family alone, plus the ideal
/// and all-randomizations baselines, all at the importance budget.
pub fn importance_matrix(cfg: &ExperimentConfig) -> Result<Vec<PlannedRun>> {
    let ordering = cfg.orderings()?[0];
    let budget = cfg.budget.importance;
    let mut runs = Vec::new();
    for kind in RandKind::ALL {
        for seed in 0..cfg.seeds {
            runs.push(PlannedRun {
                run_id: format!("imp_single_{}-s{}", kind_slug(kind), seed),
                strategy: StrategyKind::Ideal,
                ordering,
                seed,
                lambda: None,
                single: Some(kind),
                total_budget: Some(budget),
            });
        }
    }
    for strategy in [StrategyKind::Ideal, StrategyKind::Randomized] {
        for seed in 0..cfg.seeds {
            runs.push(PlannedRun {
                run_id: format!("imp_{}-s{}", strategy.as_str(), seed),
                strategy,
                ordering,
                seed,
                lambda: None,
                single: None,
                total_budget: Some(budget),
            });
        }
    }
    Ok(runs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    InProgress,
    Complete,
    Failed,
}

/// Experiment-level identity, written before any run starts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: u64,
    pub runs: Vec<PlannedRun>,
}

/// Per-run progress record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub label: String,
    pub status: RunStatus,
    pub phases_done: usize,
    pub phase_count: usize,
    /// Cumulative step count at the end of each phase (chart boundaries).
    pub boundaries: Vec<usize>,
    #[serde(default)]
    pub error: Option<String>,
}

/// Writes `contents` to `path` atomically (temp file + rename), so readers
/// and resume scans never observe partial files.
pub fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| anyhow!("cannot write to a path without a directory: {}", path.display()))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file")
    ));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("moving {} into place", path.display()))?;
    Ok(())
}

fn csv_text<T, F: Fn(&T) -> String>(header: &str, rows: &[T], to_row: F) -> String {
    let mut out = String::with_capacity(header.len() + rows.len() * 48 + 2);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&to_row(row));
        out.push('\n');
    }
    out
}

fn manifest_path(run_dir: &Path) -> PathBuf {
    run_dir.join("manifest.json")
}

fn write_run_manifest(run_dir: &Path, manifest: &RunManifest) -> Result<()> {
    atomic_write(&manifest_path(run_dir), &serde_json::to_string_pretty(manifest)?)
}

pub fn read_run_manifest(run_dir: &Path) -> Result<RunManifest> {
    let path = manifest_path(run_dir);
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn fragment_path(run_dir: &Path, phase: usize, what: &str) -> PathBuf {
    run_dir.join(format!("phase_{phase:03}.{what}.csv"))
}

fn checkpoint_path(run_dir: &Path, phase: usize) -> PathBuf {
    run_dir.join(format!("checkpoint_{phase:03}.json"))
}

/// Persists one finished phase: fragments first, then the checkpoint that
/// marks them valid.
fn persist_phase(run_dir: &Path, outcome: &PhaseOutcome, run: &StrategyRun) -> Result<()> {
    let p = outcome.phase_index;
    atomic_write(
        &fragment_path(run_dir, p, "training"),
        &csv_text(TrainingRow::CSV_HEADER, &outcome.training, TrainingRow::to_csv_row),
    )?;
    atomic_write(
        &fragment_path(run_dir, p, "evals"),
        &csv_text(EvalRecord::CSV_HEADER, &outcome.evals, EvalRecord::to_csv_row),
    )?;
    atomic_write(
        &fragment_path(run_dir, p, "draws"),
        &csv_text(DrawRow::CSV_HEADER, &outcome.draws, DrawRow::to_csv_row),
    )?;
    let checkpoint = Checkpoint::capture(run);
    atomic_write(&checkpoint_path(run_dir, p), &checkpoint.to_json()?)?;
    Ok(())
}

/// Finds the newest durable phase boundary: the highest `checkpoint_NNN`.
fn latest_checkpoint(run_dir: &Path) -> Result<Option<(usize, Checkpoint)>> {
    let mut newest: Option<usize> = None;
    if run_dir.is_dir() {
        for entry in fs::read_dir(run_dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(idx) = name
                .strip_prefix("checkpoint_")
                .and_then(|rest| rest.strip_suffix(".json"))
                .and_then(|digits| digits.parse::<usize>().ok())
            {
                newest = Some(newest.map_or(idx, |n: usize| n.max(idx)));
            }
        }
    }
    match newest {
        Some(idx) => {
            let ckpt = Checkpoint::load(&checkpoint_path(run_dir, idx))?;
            Ok(Some((idx, ckpt)))
        }
        None => Ok(None),
    }
}

/// Concatenates CSV fragments (dropping repeated headers) into one file.
fn merge_fragments(run_dir: &Path, what: &str, header: &str, phases: usize) -> Result<()> {
    let mut merged = String::new();
    merged.push_str(header);
    merged.push('\n');
    for p in 0..phases {
        let path = fragment_path(run_dir, p, what);
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        for line in text.lines().skip(1) {
            merged.push_str(line);
            merged.push('\n');
        }
    }
    atomic_write(&run_dir.join(format!("{what}.csv")), &merged)
}

/// Removes per-phase fragments and intermediate checkpoints once the merged
/// logs and final checkpoint exist.
fn remove_intermediates(run_dir: &Path, phases: usize) -> Result<()> {
    for p in 0..phases {
        for what in ["training", "evals", "draws"] {
            let path = fragment_path(run_dir, p, what);
            if path.exists() {
                fs::remove_file(&path)?;
            }
        }
        let path = checkpoint_path(run_dir, p);
        if path.exists() {
            fs::remove_file(&path)?;
        }
    }
    Ok(())
}

/// How one run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum RunReport {
    /// Nothing to do; the run had already completed.
    AlreadyComplete,
    /// Ran to the end (possibly picking up from `resumed_at` phases done).
    Completed { resumed_at: Option<usize> },
    Failed(String),
}

/// Executes one run in `out_root/runs/<run_id>`, resuming from the newest
/// phase-boundary checkpoint if one exists.
pub fn execute_run(cfg: &ExperimentConfig, planned: &PlannedRun, out_root: &Path) -> RunReport {
    match try_execute_run(cfg, planned, out_root) {
        Ok(report) => report,
        Err(e) => {
            let run_dir = out_root.join("runs").join(&planned.run_id);
            // Best effort: record the failure for `report` and rerun scans.
            let manifest = RunManifest {
                run_id: planned.run_id.clone(),
                label: planned.label(),
                status: RunStatus::Failed,
                phases_done: latest_phase_count(&run_dir),
                phase_count: 0,
                boundaries: Vec::new(),
                error: Some(format!("{e:#}")),
            };
            let _ = fs::create_dir_all(&run_dir);
            let _ = write_run_manifest(&run_dir, &manifest);
            RunReport::Failed(format!("{e:#}"))
        }
    }
}

fn latest_phase_count(run_dir: &Path) -> usize {
    latest_checkpoint(run_dir).ok().flatten().map(|(i, _)| i + 1).unwrap_or(0)
}

fn try_execute_run(
    cfg: &ExperimentConfig,
    planned: &PlannedRun,
    out_root: &Path,
) -> Result<RunReport> {
    let run_dir = out_root.join("runs").join(&planned.run_id);
    fs::create_dir_all(&run_dir)?;

    if let Ok(manifest) = read_run_manifest(&run_dir) {
        if manifest.status == RunStatus::Complete {
            return Ok(RunReport::AlreadyComplete);
        }
    }

    let (mut run, resumed_at) = match latest_checkpoint(&run_dir)? {
        Some((idx, ckpt)) => (ckpt.restore()?, Some(idx + 1)),
        None => (planned.build(cfg)?, None),
    };

    let boundaries: Vec<usize> = run
        .plan()
        .iter()
        .scan(0usize, |acc, p| {
            *acc += p.budget;
            Some(*acc)
        })
        .collect();
    let phase_count = run.plan().len();
    let mut manifest = RunManifest {
        run_id: planned.run_id.clone(),
        label: planned.label(),
        status: RunStatus::InProgress,
        phases_done: run.phase_index(),
        phase_count,
        boundaries,
        error: None,
    };
    write_run_manifest(&run_dir, &manifest)?;

    while !run.is_finished() {
        let outcome = run.run_next_phase()?;
        persist_phase(&run_dir, &outcome, &run)?;
        manifest.phases_done = run.phase_index();
        write_run_manifest(&run_dir, &manifest)?;
    }

    for (what, header) in [
        ("training", TrainingRow::CSV_HEADER),
        ("evals", EvalRecord::CSV_HEADER),
        ("draws", DrawRow::CSV_HEADER),
    ] {
        merge_fragments(&run_dir, what, header, phase_count)?;
    }
    let final_ckpt = fs::read_to_string(checkpoint_path(&run_dir, phase_count - 1))?;
    atomic_write(&run_dir.join("checkpoint.json"), &final_ckpt)?;
    remove_intermediates(&run_dir, phase_count)?;

    manifest.status = RunStatus::Complete;
    write_run_manifest(&run_dir, &manifest)?;
    Ok(RunReport::Completed { resumed_at })
}

/// Prepares `--out` for an experiment: refuses to reuse a directory holding
/// a different experiment, refuses to repeat a completed identical one
/// without `--force`, and wipes run state when `--force` is given.
pub fn prepare_out_dir(
    out_root: &Path,
    cfg: &ExperimentConfig,
    command: &str,
    runs: &[PlannedRun],
    force: bool,
) -> Result<()> {
    fs::create_dir_all(out_root)
        .with_context(|| format!("creating output directory {}", out_root.display()))?;
    let manifest_path = out_root.join("manifest.json");
    let hash = cfg.hash()?;

    if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path)?;
        let existing: ExperimentManifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", manifest_path.display()))?;
        let same = existing.config_hash == hash && existing.command == command;
        if !same && !force {
            bail!(
                "{} already holds a different experiment ({}, config {}); \
                 pick another --out or pass --force to replace it",
                out_root.display(),
                existing.command,
                &existing.config_hash[..12.min(existing.config_hash.len())]
            );
        }
        if same && !force {
            // Identical experiment: re-running is only allowed to finish
            // incomplete runs. A fully complete experiment needs --force.
            let all_complete = runs.iter().all(|r| {
                read_run_manifest(&out_root.join("runs").join(&r.run_id))
                    .map(|m| m.status == RunStatus::Complete)
                    .unwrap_or(false)
            });
            if all_complete {
                bail!(
                    "this experiment already completed in {} (identical configuration); \
                     pass --force to rerun it from scratch",
                    out_root.display()
                );
            }
        }
        if force {
            let runs_dir = out_root.join("runs");
            if runs_dir.exists() {
                fs::remove_dir_all(&runs_dir)
                    .with_context(|| format!("clearing {}", runs_dir.display()))?;
            }
            let report_dir = out_root.join("report");
            if report_dir.exists() {
                fs::remove_dir_all(&report_dir)?;
            }
        }
    }

    let manifest = ExperimentManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_hash: hash,
        seeds: cfg.seeds,
        runs: runs.to_vec(),
    };
    atomic_write(&manifest_path, &serde_json::to_string_pretty(&manifest)?)?;
    atomic_write(&out_root.join("config.resolved.toml"), &cfg.canonical_toml()?)?;
    Ok(())
}

pub fn read_experiment_manifest(out_root: &Path) -> Result<ExperimentManifest> {
    let path = out_root.join("manifest.json");
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Runs a whole experiment. Returns an error if any run failed.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    command: &str,
    out_root: &Path,
    runs: Vec<PlannedRun>,
    force: bool,
    workers: usize,
) -> Result<()> {
    prepare_out_dir(out_root, cfg, command, &runs, force)?;
    println!(
        "{command}: {} runs -> {} ({} worker{})",
        runs.len(),
        out_root.display(),
        workers,
        if workers == 1 { "" } else { "s" }
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building the worker pool")?;
    let reports: Vec<(String, RunReport)> = pool.install(|| {
        runs.par_iter()
            .map(|planned| {
                let report = execute_run(cfg, planned, out_root);
                let note = match &report {
                    RunReport::AlreadyComplete => "already complete".to_string(),
                    RunReport::Completed { resumed_at: Some(p) } => {
                        format!("complete (resumed after phase {p})")
                    }
                    RunReport::Completed { resumed_at: None } => "complete".to_string(),
                    RunReport::Failed(e) => format!("FAILED: {e}"),
                };
                println!("  {}: {}", planned.run_id, note);
                (planned.run_id.clone(), report)
            })
            .collect()
    });

    let failed: Vec<&(String, RunReport)> =
        reports.iter().filter(|(_, r)| matches!(r, RunReport::Failed(_))).collect();
    if !failed.is_empty() {
        bail!(
            "{} of {} runs failed: {}",
            failed.len(),
            reports.len(),
            failed.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(())
}
