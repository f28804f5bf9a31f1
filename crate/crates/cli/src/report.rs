//! The `report` command: merges the logs of every completed run in an
//! output directory into summary tables and SVG charts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use cdrlab_core::evalkit::{aggregate, median, AggregateRow, EvalEnv, EvalRecord};
use cdrlab_core::strategies::TrainingRow;

use crate::orchestrate::{
    atomic_write, read_experiment_manifest, read_run_manifest, PlannedRun, RunManifest, RunStatus,
};
use crate::svg::{LineChart, Series};

/// One completed run's logs, ready for pooling.
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub planned: Option<PlannedRun>,
    pub evals: Vec<EvalRecord>,
    pub training: Vec<TrainingRow>,
}

/// Reads every completed run under `out_root/runs`, in run-id order.
/// Incomplete or failed runs are skipped (collected into `skipped`).
pub fn load_completed_runs(out_root: &Path) -> Result<(Vec<LoadedRun>, Vec<String>)> {
    let planned_by_id: BTreeMap<String, PlannedRun> = read_experiment_manifest(out_root)
        .map(|m| m.runs.into_iter().map(|r| (r.run_id.clone(), r)).collect())
        .unwrap_or_default();

    let runs_dir = out_root.join("runs");
    let mut dirs: Vec<PathBuf> = Vec::new();
    if runs_dir.is_dir() {
        for entry in fs::read_dir(&runs_dir)? {
            let path = entry?.path();
            if path.is_dir() {
                dirs.push(path);
            }
        }
    }
    dirs.sort();

    let mut loaded = Vec::new();
    let mut skipped = Vec::new();
    for dir in dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let manifest = match read_run_manifest(&dir) {
            Ok(m) => m,
            Err(_) => {
                skipped.push(name);
                continue;
            }
        };
        if manifest.status != RunStatus::Complete {
            skipped.push(name);
            continue;
        }
        let evals = read_csv(&dir.join("evals.csv"), EvalRecord::from_csv_row)?;
        let training = read_csv(&dir.join("training.csv"), TrainingRow::from_csv_row)?;
        let planned = planned_by_id.get(&manifest.run_id).cloned();
        loaded.push(LoadedRun { manifest, planned, evals, training });
    }
    Ok((loaded, skipped))
}

fn read_csv<T>(
    path: &Path,
    parse: impl Fn(&str) -> cdrlab_core::Result<T>,
) -> Result<Vec<T>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse(l).map_err(|e| anyhow::anyhow!("{}: {e}", path.display())))
        .collect()
}

/// The records of a run's last evaluation snapshot.
pub fn final_records(run: &LoadedRun) -> Vec<EvalRecord> {
    let last = run.evals.iter().map(|r| r.timestep).max();
    match last {
        Some(t) => run.evals.iter().filter(|r| r.timestep == t).cloned().collect(),
        None => Vec::new(),
    }
}

/// Median across seeds of the per-seed episode-mean of a final-snapshot
/// metric; the robust scalar the experiment conclusions quote.
pub fn median_of_seed_means(
    runs: &[LoadedRun],
    pick: impl Fn(&EvalRecord) -> bool,
    metric: impl Fn(&EvalRecord) -> f64,
) -> f64 {
    let mut per_seed: Vec<f64> = Vec::new();
    for run in runs {
        let values: Vec<f64> =
            final_records(run).iter().filter(|r| pick(r)).map(&metric).collect();
        if !values.is_empty() {
            per_seed.push(values.iter().sum::<f64>() / values.len() as f64);
        }
    }
    median(&per_seed)
}

/// Fixed-width table of the pooled final-snapshot metrics.
pub fn aligned_table(rows: &[AggregateRow]) -> String {
    let fmt_ms = |m: &cdrlab_core::evalkit::MeanStd| format!("{:.3} ± {:.3}", m.mean, m.std);
    let header =
        ["strategy", "ordering", "eval_env", "r_ep", "continuity", "d_tgt", "episodes"];
    let mut cells: Vec<[String; 7]> = Vec::new();
    for r in rows {
        cells.push([
            r.strategy.clone(),
            r.ordering.clone(),
            r.eval_env.as_str().to_string(),
            fmt_ms(&r.r_ep),
            fmt_ms(&r.continuity),
            fmt_ms(&r.d_tgt),
            r.r_ep.n.to_string(),
        ]);
    }
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let mut push_row = |row: &[String]| {
        let line: Vec<String> =
            row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    push_row(&header.map(String::from));
    push_row(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in &cells {
        push_row(row);
    }
    out
}

fn summary_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "strategy,ordering,eval_env,episodes,r_ep_mean,r_ep_std,continuity_mean,continuity_std,d_tgt_mean,d_tgt_std\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.strategy,
            r.ordering,
            r.eval_env.as_str(),
            r.r_ep.n,
            r.r_ep.mean,
            r.r_ep.std,
            r.continuity.mean,
            r.continuity.std,
            r.d_tgt.mean,
            r.d_tgt.std
        ));
    }
    out
}

/// Interior phase boundaries (chart guides): every cumulative phase end
/// except each run's final step.
fn interior_boundaries(runs: &[LoadedRun]) -> Vec<f64> {
    let mut set = std::collections::BTreeSet::new();
    for run in runs {
        let b = &run.manifest.boundaries;
        for &x in b.iter().take(b.len().saturating_sub(1)) {
            set.insert(x);
        }
    }
    set.into_iter().map(|x| x as f64).collect()
}

fn series_key(run: &LoadedRun) -> String {
    // Single-phase strategies carry no meaningful ordering; leave it off.
    if run.manifest.boundaries.len() <= 1 {
        run.manifest.label.clone()
    } else {
        let ordering = run
            .evals
            .first()
            .map(|r| r.ordering.clone())
            .unwrap_or_default();
        format!("{}-{}", run.manifest.label, ordering)
    }
}

fn training_chart(runs: &[LoadedRun]) -> LineChart {
    let mut grouped: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for run in runs {
        let key = series_key(run);
        let by_t = grouped.entry(key).or_default();
        for row in &run.training {
            if row.mean_ep_reward.is_finite() {
                by_t.entry(row.timestep).or_default().push(row.mean_ep_reward);
            }
        }
    }
    let mut chart =
        LineChart::new("training episode reward", "environment steps", "mean episode reward");
    chart.vlines = interior_boundaries(runs);
    for (name, by_t) in grouped {
        let points = by_t
            .into_iter()
            .map(|(t, v)| (t as f64, v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        chart.series.push(Series { name, points });
    }
    chart
}

fn eval_chart(runs: &[LoadedRun], env: EvalEnv, metric_name: &str) -> LineChart {
    let metric = |r: &EvalRecord| match metric_name {
        "r_ep" => r.r_ep,
        "continuity" => r.continuity,
        _ => r.d_tgt,
    };
    let mut grouped: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for run in runs {
        let key = series_key(run);
        let by_t = grouped.entry(key).or_default();
        for rec in run.evals.iter().filter(|r| r.eval_env == env) {
            by_t.entry(rec.timestep).or_default().push(metric(rec));
        }
    }
    let mut chart = LineChart::new(
        &format!("{} on {} (median across episodes and seeds)", metric_name, env.as_str()),
        "environment steps",
        metric_name,
    );
    chart.vlines = interior_boundaries(runs);
    for (name, by_t) in grouped {
        let points =
            by_t.into_iter().map(|(t, v)| (t as f64, median(&v))).collect();
        chart.series.push(Series { name, points });
    }
    chart
}

/// Per-strength medians of a lambda sweep, one row per grid cell.
pub fn lambda_curve(runs: &[LoadedRun]) -> Vec<(String, String, f64, f64)> {
    // (strategy, ordering, lambda) -> final proxy-real per-seed means.
    let mut grouped: BTreeMap<(String, String, u64), Vec<f64>> = BTreeMap::new();
    for run in runs {
        let Some(planned) = &run.planned else { continue };
        let Some(lambda) = planned.lambda else { continue };
        let finals = final_records(run);
        let values: Vec<f64> = finals
            .iter()
            .filter(|r| r.eval_env == EvalEnv::ProxyReal)
            .map(|r| r.r_ep)
            .collect();
        if values.is_empty() {
            continue;
        }
        let key = (
            planned.strategy.as_str().to_string(),
            planned.ordering.as_str().to_string(),
            lambda as u64,
        );
        grouped.entry(key).or_default().push(values.iter().sum::<f64>() / values.len() as f64);
    }
    grouped
        .into_iter()
        .map(|((s, o, l), v)| (s, o, l as f64, median(&v)))
        .collect()
}

/// What `report` produced, for the caller's log line.
pub struct ReportSummary {
    pub completed_runs: usize,
    pub skipped_runs: Vec<String>,
    pub report_dir: PathBuf,
    pub table: String,
}

/// Builds every report artifact for `out_root` into `out_root/report`.
pub fn generate_report(out_root: &Path) -> Result<ReportSummary> {
    let report_dir = out_root.join("report");
    fs::create_dir_all(&report_dir)
        .with_context(|| format!("creating {}", report_dir.display()))?;

    let (runs, skipped) = load_completed_runs(out_root)?;
    if runs.is_empty() {
        atomic_write(
            &report_dir.join("NO_RUNS"),
            "No completed runs were found in this directory.\n",
        )?;
        return Ok(ReportSummary {
            completed_runs: 0,
            skipped_runs: skipped,
            report_dir,
            table: String::new(),
        });
    }

    // Final-snapshot summary over every completed run.
    let finals: Vec<EvalRecord> = runs.iter().flat_map(final_records).collect();
    let rows = aggregate(&finals);
    let table = aligned_table(&rows);
    atomic_write(&report_dir.join("summary.csv"), &summary_csv(&rows))?;
    atomic_write(&report_dir.join("summary.txt"), &table)?;

    // Learning and evaluation curves.
    atomic_write(&report_dir.join("training_reward.svg"), &training_chart(&runs).render())?;
    for env in [EvalEnv::IdealSim, EvalEnv::ProxyReal] {
        for metric in ["r_ep", "d_tgt"] {
            let name = format!("eval_{}_{}.svg", metric, env.as_str());
            atomic_write(&report_dir.join(name), &eval_chart(&runs, env, metric).render())?;
        }
    }

    // Strength sweep: one curve per (strategy, ordering) over lambda.
    let curve = lambda_curve(&runs);
    if !curve.is_empty() {
        let mut csv = String::from("strategy,ordering,lambda,median_final_proxy_r_ep\n");
        for (s, o, l, v) in &curve {
            csv.push_str(&format!("{s},{o},{l},{v}\n"));
        }
        atomic_write(&report_dir.join("lambda_curve.csv"), &csv)?;

        let mut chart = LineChart::new(
            "final proxy-real reward vs consolidation strength",
            "lambda",
            "median final proxy-real r_ep",
        );
        chart.log_x = true;
        let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for (s, o, l, v) in &curve {
            grouped.entry(format!("{s}-{o}")).or_default().push((*l, *v));
        }
        for (name, points) in grouped {
            chart.series.push(Series { name, points });
        }
        atomic_write(&report_dir.join("lambda_curve.svg"), &chart.render())?;
    }

    Ok(ReportSummary { completed_runs: runs.len(), skipped_runs: skipped, report_dir, table })
}
