//! Elastic weight consolidation for the PPO actor.
//!
//! After a training phase ends, trajectories of the current (stochastic)
//! policy are replayed into a buffer, the empirical diagonal Fisher
//! information of the action log-likelihood is estimated from them,
//! normalized to `[0, 1]`, and folded into the consolidation state:
//! classic EWC appends a `(theta*, Fisher, lambda)` anchor per task, the
//! online variant maintains a single exponentially decayed anchor. During
//! the next phase the state contributes a quadratic penalty (and its
//! gradient) on the actor parameters only.

use serde::{Deserialize, Serialize};

use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::nn::{log_prob_grads, GaussianPolicy};
use crate::ppo::ActorPenalty;
use crate::randomization::RandomizedEnv;
use rand_chacha::ChaCha8Rng;

/// Consolidation hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwcConfig {
    /// Penalty strength, shared by every anchor.
    pub lambda: f64,
    /// Decay of the online Fisher accumulator.
    pub online_gamma: f64,
    /// Whether the online penalty weighs the accumulator by gamma once more
    /// (the loss as printed) or uses it directly.
    pub online_gamma_in_penalty: bool,
    /// Replay buffer capacity in episodes.
    pub replay_episode_cap: usize,
    /// Number of (obs, action) pairs to replay for one Fisher estimate.
    pub replay_target_samples: usize,
    /// Accumulation batch size (granularity only; results are identical for
    /// any batch size).
    pub replay_batch: usize,
}

impl Default for EwcConfig {
    fn default() -> Self {
        EwcConfig {
            lambda: 5e3,
            online_gamma: 0.95,
            online_gamma_in_penalty: true,
            replay_episode_cap: 100,
            replay_target_samples: 5000,
            replay_batch: 32,
        }
    }
}

impl EwcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.online_gamma.is_finite() && (0.0..=1.0).contains(&self.online_gamma)) {
            return Err(Error::config(format!(
                "online gamma must be in [0, 1], got {}",
                self.online_gamma
            )));
        }
        if self.replay_batch == 0 {
            return Err(Error::config("replay batch size must be at least 1"));
        }
        if self.replay_episode_cap == 0 {
            return Err(Error::config("replay episode capacity must be at least 1"));
        }
        Ok(())
    }
}

/// One consolidated task: parameter snapshot, its (normalized) Fisher
/// diagonal, and the penalty strength to apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EwcAnchor {
    pub theta_star: Vec<f64>,
    pub fisher: Vec<f64>,
    pub lambda: f64,
}

/// Anchor-per-task state: memory grows linearly with consolidations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    pub anchors: Vec<EwcAnchor>,
}

/// Single-anchor state with exponentially decayed Fisher memory. Both
/// vectors stay empty until the first consolidation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineEwcState {
    pub gamma: f64,
    pub lambda: f64,
    pub theta_star: Vec<f64>,
    pub f_star: Vec<f64>,
}

impl OnlineEwcState {
    pub fn new(gamma: f64, lambda: f64) -> Self {
        OnlineEwcState { gamma, lambda, theta_star: Vec::new(), f_star: Vec::new() }
    }

    pub fn has_anchor(&self) -> bool {
        !self.f_star.is_empty()
    }
}

/// Which consolidation scheme a run uses, with its accumulated state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConsolidationState {
    /// No regularization (plain finetuning).
    Disabled,
    Ewc(EwcState),
    Online(OnlineEwcState),
}

impl ConsolidationState {
    /// Folds a finished task into the state: snapshots `actor_params` and
    /// absorbs `fisher_normalized`. No-op when disabled.
    pub fn consolidate(&mut self, actor_params: &[f64], fisher_normalized: Vec<f64>, cfg: &EwcConfig) {
        match self {
            ConsolidationState::Disabled => {}
            ConsolidationState::Ewc(state) => {
                state.anchors.push(EwcAnchor {
                    theta_star: actor_params.to_vec(),
                    fisher: fisher_normalized,
                    lambda: cfg.lambda,
                });
            }
            ConsolidationState::Online(state) => {
                if state.has_anchor() {
                    for (f, n) in state.f_star.iter_mut().zip(fisher_normalized.iter()) {
                        *f = state.gamma * *f + n;
                    }
                } else {
                    state.f_star = fisher_normalized;
                }
                state.theta_star = actor_params.to_vec();
            }
        }
    }

    /// Number of stored anchors (0 or 1 for the online variant).
    pub fn anchor_count(&self) -> usize {
        match self {
            ConsolidationState::Disabled => 0,
            ConsolidationState::Ewc(s) => s.anchors.len(),
            ConsolidationState::Online(s) => usize::from(s.has_anchor()),
        }
    }
}

/// Classic EWC penalty: `sum_k (lambda_k / 2) * sum_j F_k[j] (theta[j] - theta*_k[j])^2`
/// with gradient `sum_k lambda_k * F_k ⊙ (theta - theta*_k)`.
pub fn ewc_penalty(theta: &[f64], state: &EwcState) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for anchor in &state.anchors {
        if anchor.theta_star.len() != theta.len() || anchor.fisher.len() != theta.len() {
            return Err(Error::usage(format!(
                "anchor length {} does not match parameter length {}",
                anchor.theta_star.len(),
                theta.len()
            )));
        }
        for j in 0..theta.len() {
            let delta = theta[j] - anchor.theta_star[j];
            value += 0.5 * anchor.lambda * anchor.fisher[j] * delta * delta;
            grad[j] += anchor.lambda * anchor.fisher[j] * delta;
        }
    }
    Ok((value, grad))
}

/// Online EWC penalty: `(lambda / 2) * sum_j gamma * f_star[j] (theta[j] - theta*[j])^2`
/// (the extra `gamma` is dropped when `gamma_in_penalty` is false).
pub fn online_penalty(
    theta: &[f64],
    state: &OnlineEwcState,
    gamma_in_penalty: bool,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; theta.len()];
    if !state.has_anchor() {
        return Ok((0.0, grad));
    }
    if state.theta_star.len() != theta.len() || state.f_star.len() != theta.len() {
        return Err(Error::usage(format!(
            "online anchor length {} does not match parameter length {}",
            state.theta_star.len(),
            theta.len()
        )));
    }
    let weight = if gamma_in_penalty { state.gamma } else { 1.0 };
    let mut value = 0.0;
    for j in 0..theta.len() {
        let delta = theta[j] - state.theta_star[j];
        let w = state.lambda * weight * state.f_star[j];
        value += 0.5 * w * delta * delta;
        grad[j] += w * delta;
    }
    Ok((value, grad))
}

/// Adapter plugging a consolidation state into the PPO update. When the
/// state cannot contribute (disabled, no anchors yet, or zero strength) the
/// gradient buffer is left bit-for-bit untouched, which keeps zero-strength
/// runs on the exact arithmetic path of penalty-free ones.
pub struct ConsolidationPenalty<'a> {
    pub state: &'a ConsolidationState,
    pub gamma_in_penalty: bool,
}

impl ActorPenalty for ConsolidationPenalty<'_> {
    fn value_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        match self.state {
            ConsolidationState::Disabled => 0.0,
            ConsolidationState::Ewc(s) => {
                if s.anchors.is_empty() || s.anchors.iter().all(|a| a.lambda == 0.0) {
                    return 0.0;
                }
                let (value, g) = ewc_penalty(params, s).expect("anchor lengths fixed per run");
                for (acc, gi) in grad.iter_mut().zip(g.iter()) {
                    *acc += gi;
                }
                value
            }
            ConsolidationState::Online(s) => {
                if !s.has_anchor() || s.lambda == 0.0 {
                    return 0.0;
                }
                let (value, g) =
                    online_penalty(params, s, self.gamma_in_penalty).expect("anchor lengths fixed per run");
                for (acc, gi) in grad.iter_mut().zip(g.iter()) {
                    *acc += gi;
                }
                value
            }
        }
    }
}

/// One replayed step: the observation the policy acted on, the raw sampled
/// action, and its log-density at collection time.
#[derive(Clone, Debug)]
pub struct ReplaySample {
    pub obs: Observation,
    pub action: Action,
    pub logp: f64,
}

/// Replayed experience for one Fisher estimate.
#[derive(Clone, Debug, Default)]
pub struct FisherReplayBuffer {
    pub samples: Vec<ReplaySample>,
    pub episodes_seen: usize,
}

impl FisherReplayBuffer {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Rolls out the stochastic policy until `replay_target_samples` pairs are
/// stored (stopping mid-episode on the dot) or `replay_episode_cap` episodes
/// have been consumed, whichever comes first.
pub fn collect_fisher_samples(
    policy: &GaussianPolicy,
    env: &mut RandomizedEnv,
    cfg: &EwcConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FisherReplayBuffer> {
    cfg.validate()?;
    let mut buffer = FisherReplayBuffer::default();
    let target = cfg.replay_target_samples;
    while buffer.len() < target && buffer.episodes_seen < cfg.replay_episode_cap {
        let mut obs = if buffer.episodes_seen == 0 {
            env.current_observation()
        } else {
            env.reset()
        };
        buffer.episodes_seen += 1;
        loop {
            if buffer.len() >= target {
                break;
            }
            let (action, logp) = policy.sample(&obs, rng);
            let result = env.step([action[0], action[1]])?;
            buffer.samples.push(ReplaySample { obs, action: [action[0], action[1]], logp });
            if result.terminated || env.truncated() {
                break;
            }
            obs = result.observation;
        }
    }
    Ok(buffer)
}

/// Empirical diagonal Fisher: the mean squared gradient of the action
/// log-density over the buffer. The batch size only sets traversal
/// granularity — accumulation order is fixed, so any partition gives the
/// same result. An empty buffer yields all zeros.
pub fn compute_fisher_diag(
    policy: &GaussianPolicy,
    buffer: &FisherReplayBuffer,
    batch_size: usize,
) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::config("fisher batch size must be at least 1"));
    }
    let mut fisher = vec![0.0; policy.param_count()];
    if buffer.is_empty() {
        return Ok(fisher);
    }
    for chunk in buffer.samples.chunks(batch_size) {
        for sample in chunk {
            let x = ndarray::Array2::from_shape_vec((1, sample.obs.len()), sample.obs.to_vec())
                .expect("static observation shape");
            let cache = policy.mean_batch_cached(x.view());
            let mu = cache.output().row(0).to_vec();
            let (d_mu, d_ls) = log_prob_grads(&mu, policy.log_std(), &sample.action);
            let d_mu = ndarray::Array2::from_shape_vec((1, d_mu.len()), d_mu)
                .expect("static action shape");
            let grad = policy.backward(&cache, d_mu.view(), &d_ls);
            for (f, g) in fisher.iter_mut().zip(grad.iter()) {
                *f += g * g;
            }
        }
    }
    let n = buffer.len() as f64;
    for f in fisher.iter_mut() {
        *f /= n;
    }
    Ok(fisher)
}

/// Scales a nonnegative Fisher diagonal so its maximum entry becomes 1.
/// All-zero input stays all-zero; ratios and the argmax are preserved.
pub fn normalize_fisher(fisher: &[f64]) -> Vec<f64> {
    assert!(
        fisher.iter().all(|&f| f >= 0.0),
        "fisher entries must be nonnegative"
    );
    let max = fisher.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return fisher.to_vec();
    }
    fisher.iter().map(|f| f / max).collect()
}
