//! Proximal policy optimization with a clipped surrogate objective.
//!
//! The update consumes a rollout buffer that has been post-processed with
//! generalized advantage estimation, shuffles it into minibatches, and for
//! each minibatch descends the actor objective
//! `-min(ratio * adv, clip(ratio) * adv) - c2 * entropy + penalty` and the
//! critic objective `c1 * mean((V - return)^2)`. The optional penalty hook is
//! how consolidation regularizers attach to the actor; everything else is
//! penalty-agnostic.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, Observation, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{log_prob_grads, Adam, FlatGrad, GaussianPolicy, Mlp};
use crate::randomization::RandomizedEnv;

/// Hyperparameters for collection and updates.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Generalized-advantage-estimation mixing factor.
    pub gae_lambda: f64,
    /// Adam learning rate for both networks.
    pub lr: f64,
    /// Clipping radius for the probability ratio.
    pub clip_eps: f64,
    /// Weight of the squared value error.
    pub value_coef: f64,
    /// Weight of the entropy bonus.
    pub entropy_coef: f64,
    /// Passes over the rollout per update.
    pub epochs: usize,
    /// Minibatches per pass.
    pub minibatches: usize,
    /// Environment steps collected per update.
    pub rollout_horizon: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            lr: 2.5e-4,
            clip_eps: 0.1,
            value_coef: 0.5,
            entropy_coef: 0.0,
            epochs: 10,
            minibatches: 32,
            rollout_horizon: 2048,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v, lo, hi) in [
            ("gamma", self.gamma, 0.0, 1.0),
            ("gae_lambda", self.gae_lambda, 0.0, 1.0),
        ] {
            if !(v.is_finite() && (lo..=hi).contains(&v)) {
                return Err(Error::config(format!("{name} must be in [{lo}, {hi}], got {v}")));
            }
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::config(format!("lr must be nonnegative, got {}", self.lr)));
        }
        if !(self.clip_eps.is_finite() && self.clip_eps > 0.0) {
            return Err(Error::config(format!("clip_eps must be positive, got {}", self.clip_eps)));
        }
        if !(self.value_coef.is_finite() && self.value_coef >= 0.0)
            || !(self.entropy_coef.is_finite() && self.entropy_coef >= 0.0)
        {
            return Err(Error::config("loss coefficients must be nonnegative".to_string()));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.rollout_horizon == 0 {
            return Err(Error::config("epochs, minibatches and rollout_horizon must be positive".to_string()));
        }
        Ok(())
    }
}

/// Generalized advantage estimation.
///
/// `next_values[t]` is the critic's value of the state after step `t`; it is
/// ignored where `terminated[t]` is set and serves as the bootstrap where an
/// episode (or the buffer) was cut short. Returns `(advantages, returns)`
/// with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::usage("cannot run advantage estimation on an empty sequence"));
    }
    if [values.len(), next_values.len(), terminated.len(), truncated.len()] != [n; 4] {
        return Err(Error::usage(format!(
            "advantage inputs must share one length, got {}/{}/{}/{}/{}",
            n,
            values.len(),
            next_values.len(),
            terminated.len(),
            truncated.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config(format!("gamma {gamma} and lambda {lambda} must be in [0, 1]")));
    }

    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_terminal = if terminated[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * not_terminal - values[t];
        let episode_continues = if terminated[t] || truncated[t] { 0.0 } else { 1.0 };
        acc = delta + gamma * lambda * episode_continues * acc;
        advantages[t] = acc;
    }
    let returns = advantages.iter().zip(values.iter()).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// One surrogate term: `min(ratio * adv, clip(ratio, 1 - eps, 1 + eps) * adv)`.
/// Clipping makes the objective a pessimistic bound on the unclipped value.
pub fn clipped_surrogate_term(ratio: f64, adv: f64, eps: f64) -> f64 {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
    unclipped.min(clipped)
}

/// Normalizes in place to zero mean and unit sample standard deviation
/// (plus a small floor). Batches smaller than 2 are left untouched.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let denom = var.sqrt() + 1e-8;
    for a in adv.iter_mut() {
        *a = (*a - mean) / denom;
    }
}

/// On-policy experience from one collection pass. Episodes may span buffer
/// boundaries; cut points are bootstrapped through `next_values`.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub obs: Vec<Observation>,
    /// Raw (unclamped) sampled actions — the ones the densities refer to.
    pub actions: Vec<Action>,
    pub logps: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub next_values: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn is_processed(&self) -> bool {
        self.advantages.len() == self.len() && !self.is_empty()
    }

    /// Fills advantages and returns; must run before [`ppo_update`].
    pub fn process(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let (adv, ret) = compute_gae(
            &self.rewards,
            &self.values,
            &self.next_values,
            &self.terminated,
            &self.truncated,
            gamma,
            lambda,
        )?;
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }
}

/// Carries episode-return bookkeeping across collection calls, since an
/// episode can straddle two rollouts.
#[derive(Clone, Debug, Default)]
pub struct EpisodeTracker {
    running: f64,
    /// Returns of episodes that finished, in completion order.
    pub completed: Vec<f64>,
}

impl EpisodeTracker {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Statistics from one collection pass.
#[derive(Clone, Debug)]
pub struct CollectStats {
    pub steps: usize,
    /// Returns of episodes completed during this pass.
    pub episode_returns: Vec<f64>,
}

/// Runs the policy in `env` for `horizon` steps, continuing whatever episode
/// the environment is currently in and resetting through episode ends.
pub fn collect_rollout(
    policy: &GaussianPolicy,
    critic: &Mlp,
    env: &mut RandomizedEnv,
    horizon: usize,
    tracker: &mut EpisodeTracker,
    rng: &mut ChaCha8Rng,
) -> Result<(RolloutBuffer, CollectStats)> {
    if horizon == 0 {
        return Err(Error::usage("rollout horizon must be at least 1"));
    }
    let mut buf = RolloutBuffer::default();
    let completed_before = tracker.completed.len();
    let mut obs = env.current_observation();
    for _ in 0..horizon {
        let value = critic.forward_one(&obs)[0];
        let (action, logp) = policy.sample(&obs, rng);
        let result = env.step([action[0], action[1]])?;
        let truncated = env.truncated();
        buf.obs.push(obs);
        buf.actions.push([action[0], action[1]]);
        buf.logps.push(logp);
        buf.rewards.push(result.reward);
        buf.values.push(value);
        buf.terminated.push(result.terminated);
        buf.truncated.push(truncated && !result.terminated);
        // Placeholder; resolved below once the next value is known.
        buf.next_values.push(f64::NAN);
        tracker.running += result.reward;

        if result.terminated || truncated {
            tracker.completed.push(tracker.running);
            tracker.running = 0.0;
            let t = buf.len() - 1;
            buf.next_values[t] = if result.terminated {
                0.0
            } else {
                critic.forward_one(&result.observation)[0]
            };
            obs = env.reset();
        } else {
            obs = result.observation;
        }
    }
    // Steps whose episode continued: the next state's value is the next
    // entry's value, or a fresh bootstrap at the buffer edge.
    let n = buf.len();
    for t in 0..n {
        if buf.next_values[t].is_nan() {
            buf.next_values[t] = if t + 1 < n {
                buf.values[t + 1]
            } else {
                critic.forward_one(&obs)[0]
            };
        }
    }
    let stats = CollectStats {
        steps: n,
        episode_returns: tracker.completed[completed_before..].to_vec(),
    };
    Ok((buf, stats))
}

/// A differentiable penalty on the actor's parameter vector. Implementations
/// add their gradient into `grad` and return the penalty value.
pub trait ActorPenalty {
    fn value_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64;
}

/// Aggregate statistics from one [`ppo_update`].
#[derive(Clone, Debug, Default)]
pub struct UpdateStats {
    /// Mean actor objective (surrogate minus entropy bonus, penalty excluded).
    pub actor_loss: f64,
    /// Mean weighted value loss.
    pub critic_loss: f64,
    /// Mean consolidation penalty (0 when no penalty is attached).
    pub penalty: f64,
    /// Policy entropy after the update.
    pub entropy: f64,
    /// Fraction of samples whose ratio left the clip region.
    pub clip_fraction: f64,
    pub minibatches_run: usize,
}

/// One minibatch of actor inputs. `adv` must already be normalized.
pub struct ActorBatch<'a> {
    pub x: ArrayView2<'a, f64>,
    pub a: ArrayView2<'a, f64>,
    pub old_logp: &'a [f64],
    /// Already normalized.
    pub adv: &'a [f64],
}

/// Scalar diagnostics accompanying one actor gradient.
pub struct ActorDiag {
    /// Surrogate plus entropy term (the differentiated objective, penalty
    /// excluded).
    pub loss: f64,
    pub penalty: f64,
    pub clipped: usize,
}

/// Loss and flat gradient of the actor objective on one minibatch. The
/// returned gradient differentiates `loss + penalty` with respect to the
/// policy parameters; exposing it lets callers verify the analytic
/// derivatives against finite differences.
pub fn actor_minibatch_loss_grad(
    policy: &GaussianPolicy,
    batch: &ActorBatch,
    cfg: &PpoConfig,
    penalty: Option<&dyn ActorPenalty>,
) -> (FlatGrad, ActorDiag) {
    let n = batch.x.nrows();
    let act_dim = policy.act_dim();
    let cache = policy.mean_batch_cached(batch.x);
    let new_logp = policy.log_prob_batch(&cache, batch.a);
    let mu = cache.output().clone();

    let mut surrogate = 0.0;
    let mut clipped = 0usize;
    let mut d_mu = Array2::zeros((n, act_dim));
    let mut d_ls = vec![0.0; act_dim];
    for k in 0..n {
        let ratio = (new_logp[k] - batch.old_logp[k]).exp();
        let adv = batch.adv[k];
        let unclipped = ratio * adv;
        let clamped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
        surrogate += -unclipped.min(clamped);
        if (ratio - 1.0).abs() > cfg.clip_eps {
            clipped += 1;
        }
        // The clipped branch is constant in the parameters, so only samples
        // where the unclipped term attains the min carry gradient.
        if unclipped <= clamped {
            let w = -adv * ratio / n as f64;
            let (dm, dl) = log_prob_grads(
                mu.row(k).as_slice().unwrap(),
                policy.log_std(),
                batch.a.row(k).as_slice().unwrap(),
            );
            for i in 0..act_dim {
                d_mu[(k, i)] = w * dm[i];
                d_ls[i] += w * dl[i];
            }
        }
    }
    surrogate /= n as f64;

    // Entropy bonus: state-independent, gradient 1 per log-std dimension.
    let entropy_term = -cfg.entropy_coef * policy.entropy();
    for dl in d_ls.iter_mut() {
        *dl -= cfg.entropy_coef;
    }

    let mut grad = policy.backward(&cache, d_mu.view(), &d_ls);
    let penalty_value = match penalty {
        Some(p) => p.value_and_grad(&policy.params(), &mut grad),
        None => 0.0,
    };
    (
        grad,
        ActorDiag { loss: surrogate + entropy_term, penalty: penalty_value, clipped },
    )
}

/// Loss and flat gradient of the weighted value objective on one minibatch.
pub fn critic_minibatch_loss_grad(
    critic: &Mlp,
    x: ArrayView2<f64>,
    returns: &[f64],
    value_coef: f64,
) -> (f64, FlatGrad) {
    let n = x.nrows();
    let cache = critic.forward_cached(x);
    let v = cache.output();
    let mut loss = 0.0;
    let mut d_out = Array2::zeros((n, 1));
    for k in 0..n {
        let err = v[(k, 0)] - returns[k];
        loss += value_coef * err * err;
        d_out[(k, 0)] = value_coef * 2.0 * err / n as f64;
    }
    loss /= n as f64;
    (loss, critic.backward(&cache, d_out.view()))
}

/// One PPO update over a processed rollout buffer. Deterministic given the
/// buffer, parameters, config and RNG state.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut GaussianPolicy,
    critic: &mut Mlp,
    policy_opt: &mut Adam,
    critic_opt: &mut Adam,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    penalty: Option<&dyn ActorPenalty>,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    cfg.validate()?;
    if buffer.is_empty() {
        return Err(Error::usage("cannot update from an empty rollout buffer"));
    }
    if !buffer.is_processed() {
        return Err(Error::usage("rollout buffer must be processed before updating"));
    }

    let n = buffer.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut samples_seen = 0usize;
    let mut clipped_total = 0usize;

    for _epoch in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in partition(&indices, cfg.minibatches) {
            let m = chunk.len();
            let mut x = Array2::zeros((m, OBS_DIM));
            let mut a = Array2::zeros((m, ACTION_DIM));
            let mut old_logp = Vec::with_capacity(m);
            let mut adv = Vec::with_capacity(m);
            let mut returns = Vec::with_capacity(m);
            for (row, &idx) in chunk.iter().enumerate() {
                for c in 0..OBS_DIM {
                    x[(row, c)] = buffer.obs[idx][c];
                }
                for c in 0..ACTION_DIM {
                    a[(row, c)] = buffer.actions[idx][c];
                }
                old_logp.push(buffer.logps[idx]);
                adv.push(buffer.advantages[idx]);
                returns.push(buffer.returns[idx]);
            }
            normalize_advantages(&mut adv);

            let batch = ActorBatch { x: x.view(), a: a.view(), old_logp: &old_logp, adv: &adv };
            let (actor_grad, diag) = actor_minibatch_loss_grad(policy, &batch, cfg, penalty);
            let mut actor_params = policy.params();
            policy_opt.step(&mut actor_params, &actor_grad);
            policy.set_params(&actor_params)?;

            let (critic_loss, critic_grad) =
                critic_minibatch_loss_grad(critic, x.view(), &returns, cfg.value_coef);
            let mut critic_params = critic.params();
            critic_opt.step(&mut critic_params, &critic_grad);
            critic.set_params(&critic_params)?;

            stats.actor_loss += diag.loss;
            stats.critic_loss += critic_loss;
            stats.penalty += diag.penalty;
            clipped_total += diag.clipped;
            samples_seen += m;
            stats.minibatches_run += 1;
        }
    }

    let mb = stats.minibatches_run as f64;
    stats.actor_loss /= mb;
    stats.critic_loss /= mb;
    stats.penalty /= mb;
    stats.entropy = policy.entropy();
    stats.clip_fraction = clipped_total as f64 / samples_seen as f64;
    Ok(stats)
}

/// Splits `indices` into up to `parts` contiguous, near-equal chunks (never
/// empty; fewer chunks when there are fewer items than parts).
fn partition<'a>(indices: &'a [usize], parts: usize) -> Vec<&'a [usize]> {
    let n = indices.len();
    let parts = parts.min(n).max(1);
    let base = n / parts;
    let rem = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let len = base + usize::from(i < rem);
        out.push(&indices[start..start + len]);
        start += len;
    }
    out
}
