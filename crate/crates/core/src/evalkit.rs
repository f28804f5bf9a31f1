//! Episode metrics and zero-shot evaluation.
//!
//! Three per-episode metrics: the episodic reward (sum of rewards), an
//! action-continuity cost normalized to `[0, 100]`, and the mean distance to
//! the target over the second half of the episode. [`evaluate`] rolls out
//! the deterministic policy (its mean action) for a fixed number of episodes
//! and computes all three; [`aggregate`] pools records into
//! mean ± population-standard-deviation rows per strategy, phase ordering,
//! and evaluation environment.

use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::error::{Error, Result};
use crate::nn::GaussianPolicy;
use crate::randomization::RandomizedEnv;

/// Which frozen environment an evaluation episode ran in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvalEnv {
    /// The unrandomized training simulator.
    IdealSim,
    /// The held-out stand-in for reality (fixed latency, noise, actuation).
    ProxyReal,
}

impl EvalEnv {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalEnv::IdealSim => "ideal_sim",
            EvalEnv::ProxyReal => "proxy_real",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ideal_sim" => Ok(EvalEnv::IdealSim),
            "proxy_real" => Ok(EvalEnv::ProxyReal),
            other => Err(Error::input(format!("unknown evaluation environment `{other}`"))),
        }
    }
}

impl std::fmt::Display for EvalEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Compensated (Neumaier) summation: episode aggregates run over hundreds of
/// same-sign terms, where plain accumulation drifts by more than the 1e-12
/// agreement we hold the metrics to.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for v in values {
        let t = sum + v;
        compensation += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + compensation
}

/// Sum of the per-step rewards of one episode.
pub fn episodic_reward(rewards: &[f64]) -> f64 {
    compensated_sum(rewards.iter().copied())
}

/// Action-continuity cost in `[0, 100]`: the mean squared consecutive action
/// change, normalized by the largest consecutive change of the episode. A
/// constant action sequence costs 0; a sequence whose every change is the
/// largest (e.g. alternating between opposite corners) costs 100.
pub fn continuity_cost(actions: &[Action]) -> Result<f64> {
    if actions.len() < 2 {
        return Err(Error::usage(format!(
            "continuity needs at least two actions, got {}",
            actions.len()
        )));
    }
    let sq_change = |a: &Action, b: &Action| -> f64 {
        (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)
    };
    let mut max_sq = 0.0f64;
    for w in actions.windows(2) {
        max_sq = max_sq.max(sq_change(&w[0], &w[1]));
    }
    if max_sq == 0.0 {
        return Ok(0.0);
    }
    let mean_sq = actions.windows(2).map(|w| sq_change(&w[0], &w[1])).sum::<f64>()
        / (actions.len() - 1) as f64;
    // The mean never exceeds the max mathematically, but summation and the
    // 100x scaling each round, so clamp the ratio before scaling to keep the
    // score inside [0, 100] bit-for-bit.
    Ok(100.0 * (mean_sq / max_sq).min(1.0))
}

/// Mean distance from the end-effector to the target over the closed step
/// window `[T/2, T]`, where `positions[t]` is the position at step `t` (index
/// 0 is the pre-action pose). Pass `squared` to average squared distances
/// instead. Episodes that end early must be padded to full length by the
/// caller before the window can be read.
pub fn distance_to_target_metric(
    positions: &[[f64; 3]],
    target: [f64; 3],
    max_steps: usize,
    squared: bool,
) -> Result<f64> {
    let start = max_steps / 2;
    if positions.len() <= max_steps {
        return Err(Error::usage(format!(
            "distance window needs positions for steps 0..={max_steps}, got {}",
            positions.len()
        )));
    }
    let window = &positions[start..=max_steps];
    let sum = compensated_sum(window.iter().map(|p| {
        let d2 = (p[0] - target[0]).powi(2)
            + (p[1] - target[1]).powi(2)
            + (p[2] - target[2]).powi(2);
        if squared { d2 } else { d2.sqrt() }
    }));
    Ok(sum / window.len() as f64)
}

/// Metrics of one evaluation episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub r_ep: f64,
    pub continuity: f64,
    pub d_tgt: f64,
}

/// Rolls the policy's mean action through `episodes` fresh episodes of `env`
/// and scores each one. Early-terminated episodes are padded with their
/// final end-effector position so the distance window is always defined.
pub fn evaluate(
    policy: &GaussianPolicy,
    env: &mut RandomizedEnv,
    episodes: usize,
    squared_distance: bool,
) -> Result<Vec<EpisodeMetrics>> {
    if policy.mean_net().input_dim() != crate::env::OBS_DIM {
        return Err(Error::config(format!(
            "policy expects {}-dimensional observations, environment provides {}",
            policy.mean_net().input_dim(),
            crate::env::OBS_DIM
        )));
    }
    let max_steps = env.inner().spec().max_steps;
    let target = env.inner().spec().target;
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut rewards = Vec::with_capacity(max_steps);
        let mut actions: Vec<Action> = Vec::with_capacity(max_steps);
        let mut positions = Vec::with_capacity(max_steps + 1);
        positions.push(env.ee_position());
        loop {
            let mu = policy.mean(&obs);
            let action = [mu[0].clamp(-1.0, 1.0), mu[1].clamp(-1.0, 1.0)];
            let result = env.step(action)?;
            actions.push(action);
            rewards.push(result.reward);
            positions.push(result.ee_pos);
            if result.terminated || env.truncated() {
                break;
            }
            obs = result.observation;
        }
        let last = *positions.last().expect("at least the initial position");
        while positions.len() <= max_steps {
            positions.push(last);
        }
        out.push(EpisodeMetrics {
            r_ep: episodic_reward(&rewards),
            continuity: continuity_cost(&actions)?,
            d_tgt: distance_to_target_metric(&positions, target, max_steps, squared_distance)?,
        });
    }
    Ok(out)
}

/// One evaluation episode with its full provenance; one CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub run_id: String,
    pub strategy: String,
    pub ordering: String,
    pub seed: u64,
    pub phase: usize,
    pub timestep: usize,
    pub eval_env: EvalEnv,
    pub episode: usize,
    pub r_ep: f64,
    pub continuity: f64,
    pub d_tgt: f64,
}

impl EvalRecord {
    pub const CSV_HEADER: &'static str =
        "run_id,strategy,ordering,seed,phase,timestep,eval_env,episode,r_ep,continuity,d_tgt";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.strategy,
            self.ordering,
            self.seed,
            self.phase,
            self.timestep,
            self.eval_env,
            self.episode,
            self.r_ep,
            self.continuity,
            self.d_tgt
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::input(format!(
                "evaluation row needs 11 fields, got {}: `{row}`",
                fields.len()
            )));
        }
        let parse_f = |s: &str, name: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::input(format!("bad {name} value `{s}`")))
        };
        let parse_u = |s: &str, name: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::input(format!("bad {name} value `{s}`")))
        };
        Ok(EvalRecord {
            run_id: fields[0].to_string(),
            strategy: fields[1].to_string(),
            ordering: fields[2].to_string(),
            seed: fields[3]
                .parse::<u64>()
                .map_err(|_| Error::input(format!("bad seed value `{}`", fields[3])))?,
            phase: parse_u(fields[4], "phase")?,
            timestep: parse_u(fields[5], "timestep")?,
            eval_env: EvalEnv::parse(fields[6])?,
            episode: parse_u(fields[7], "episode")?,
            r_ep: parse_f(fields[8], "r_ep")?,
            continuity: parse_f(fields[9], "continuity")?,
            d_tgt: parse_f(fields[10], "d_tgt")?,
        })
    }
}

/// Mean and population standard deviation of one metric over a group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean ± population standard deviation; never the sample (n−1) form.
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: f64::NAN, std: f64::NAN, n: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    MeanStd { mean, std: var.sqrt(), n }
}

/// Median (midpoint of the two central order statistics for even counts).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Aggregated metrics for one (strategy, ordering, eval env) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: String,
    pub ordering: String,
    pub eval_env: EvalEnv,
    pub r_ep: MeanStd,
    pub continuity: MeanStd,
    pub d_tgt: MeanStd,
}

/// Pools evaluation records by (strategy, ordering, eval env) and summarizes
/// each metric as mean ± population standard deviation. Rows come out in
/// first-appearance order of their group.
pub fn aggregate(records: &[EvalRecord]) -> Vec<AggregateRow> {
    let mut order: Vec<(String, String, EvalEnv)> = Vec::new();
    let mut groups: std::collections::HashMap<(String, String, EvalEnv), Vec<&EvalRecord>> =
        std::collections::HashMap::new();
    for r in records {
        let key = (r.strategy.clone(), r.ordering.clone(), r.eval_env);
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let col = |f: &dyn Fn(&EvalRecord) -> f64| -> Vec<f64> {
                rs.iter().map(|r| f(r)).collect()
            };
            AggregateRow {
                strategy: key.0,
                ordering: key.1,
                eval_env: key.2,
                r_ep: mean_std(&col(&|r| r.r_ep)),
                continuity: mean_std(&col(&|r| r.continuity)),
                d_tgt: mean_std(&col(&|r| r.d_tgt)),
            }
        })
        .collect()
}
