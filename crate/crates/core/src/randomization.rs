//! Domain randomization wrappers around [`ReacherEnv`].
//!
//! Three properties of the simulation can be randomized, drawn once per
//! episode:
//! - actuation response ("torque"): commanded velocity is tracked through a
//!   first-order lag derived from a stiffness/damping pair,
//! - observation latency: the agent sees an earlier true observation,
//! - observation noise: additive uniform noise per component, scaled as a
//!   percentage of each component's value range.
//!
//! Inactive randomizations consume no randomness at all, so a wrapper with
//! everything off is bit-for-bit the bare environment. A frozen parameter
//! set ([`proxy_real_params`]) stands in for "the real robot": policies are
//! never trained on it, only evaluated.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, ArmModel, Observation, ReacherEnv, StepResult, OBS_DIM};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, stream};

/// The three randomizable simulation properties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RandKind {
    /// Actuation response (stiffness/damping velocity lag).
    Torque,
    /// Observation latency.
    Latency,
    /// Observation noise.
    Noise,
}

impl RandKind {
    pub const ALL: [RandKind; 3] = [RandKind::Torque, RandKind::Latency, RandKind::Noise];

    pub fn letter(self) -> char {
        match self {
            RandKind::Torque => 'T',
            RandKind::Latency => 'L',
            RandKind::Noise => 'N',
        }
    }

    pub fn from_letter(c: char) -> Result<Self> {
        match c.to_ascii_uppercase() {
            'T' => Ok(RandKind::Torque),
            'L' => Ok(RandKind::Latency),
            'N' => Ok(RandKind::Noise),
            other => Err(Error::input(format!("unknown randomization letter '{other}'"))),
        }
    }
}

/// Stiffness/damping sampling ranges for the actuation-response draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueRanges {
    /// Log-uniform stiffness range.
    pub stiffness: (f64, f64),
    /// Log-uniform damping range.
    pub damping: (f64, f64),
}

impl Default for TorqueRanges {
    fn default() -> Self {
        TorqueRanges { stiffness: (10.0, 1000.0), damping: (10.0, 1000.0) }
    }
}

/// Sampling ranges for every randomizable property.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizationRanges {
    /// Uniform latency range in seconds.
    pub latency_s: (f64, f64),
    /// Uniform noise range in percent of each component's range.
    pub noise_pct: (f64, f64),
    pub torque: TorqueRanges,
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        RandomizationRanges {
            latency_s: (0.0, 1.0),
            noise_pct: (0.0, 10.0),
            torque: TorqueRanges::default(),
        }
    }
}

/// Which properties a given environment actually randomizes, with their
/// ranges. `None` means that property stays at its nominal (off) value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RandomizationSet {
    pub latency_s: Option<(f64, f64)>,
    pub noise_pct: Option<(f64, f64)>,
    pub torque: Option<TorqueRanges>,
}

impl RandomizationSet {
    /// Nothing randomized (the ideal simulation).
    pub fn none() -> Self {
        RandomizationSet::default()
    }

    /// All three properties randomized.
    pub fn all(ranges: &RandomizationRanges) -> Self {
        RandomizationSet {
            latency_s: Some(ranges.latency_s),
            noise_pct: Some(ranges.noise_pct),
            torque: Some(ranges.torque),
        }
    }

    /// Exactly one property randomized.
    pub fn single(kind: RandKind, ranges: &RandomizationRanges) -> Self {
        let mut set = RandomizationSet::none();
        match kind {
            RandKind::Torque => set.torque = Some(ranges.torque),
            RandKind::Latency => set.latency_s = Some(ranges.latency_s),
            RandKind::Noise => set.noise_pct = Some(ranges.noise_pct),
        }
        set
    }

    pub fn is_empty(&self) -> bool {
        self.latency_s.is_none() && self.noise_pct.is_none() && self.torque.is_none()
    }

    pub fn active_kinds(&self) -> Vec<RandKind> {
        let mut kinds = Vec::new();
        if self.torque.is_some() {
            kinds.push(RandKind::Torque);
        }
        if self.latency_s.is_some() {
            kinds.push(RandKind::Latency);
        }
        if self.noise_pct.is_some() {
            kinds.push(RandKind::Noise);
        }
        kinds
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.latency_s {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::config(format!("latency range ({lo}, {hi}) must satisfy 0 <= lo <= hi")));
            }
        }
        if let Some((lo, hi)) = self.noise_pct {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 100.0) {
                return Err(Error::config(format!(
                    "noise range ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 100"
                )));
            }
        }
        if let Some(t) = self.torque {
            for (name, (lo, hi)) in [("stiffness", t.stiffness), ("damping", t.damping)] {
                if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
                    return Err(Error::config(format!("{name} range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
                }
            }
        }
        Ok(())
    }
}

/// Concrete stiffness/damping pair in effect for one episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuationParams {
    pub stiffness: f64,
    pub damping: f64,
}

impl ActuationParams {
    /// First-order tracking coefficient: the achieved velocity moves this
    /// fraction of the way toward the command each step.
    pub fn alpha(&self, dt: f64) -> f64 {
        (dt * self.stiffness / self.damping).clamp(0.0, 1.0)
    }
}

/// Concrete randomization values in effect for one episode. `None` fields
/// were inactive (nominal behavior, no randomness consumed).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeParams {
    pub latency_s: Option<f64>,
    pub noise_pct: Option<f64>,
    pub actuation: Option<ActuationParams>,
}

impl EpisodeParams {
    /// Observation delay in whole steps (latency rounded to the grid).
    pub fn delay_steps(&self, dt: f64) -> usize {
        match self.latency_s {
            Some(l) => (l / dt).round() as usize,
            None => 0,
        }
    }

    pub fn is_nominal(&self) -> bool {
        self.latency_s.is_none() && self.noise_pct.is_none() && self.actuation.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.latency_s {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::config(format!("latency {l} must be nonnegative")));
            }
        }
        if let Some(p) = self.noise_pct {
            if !(p.is_finite() && (0.0..=100.0).contains(&p)) {
                return Err(Error::config(format!("noise percent {p} must be in [0, 100]")));
            }
        }
        if let Some(a) = self.actuation {
            if !(a.stiffness.is_finite() && a.stiffness > 0.0 && a.damping.is_finite() && a.damping > 0.0) {
                return Err(Error::config(format!(
                    "stiffness/damping ({}, {}) must be positive",
                    a.stiffness, a.damping
                )));
            }
        }
        Ok(())
    }
}

/// The held-out evaluation environment's frozen parameters: 60 ms latency,
/// 2% observation noise, and a sluggish actuation response.
pub fn proxy_real_params() -> EpisodeParams {
    EpisodeParams {
        latency_s: Some(0.06),
        noise_pct: Some(2.0),
        actuation: Some(ActuationParams { stiffness: 120.0, damping: 400.0 }),
    }
}

/// Per-component observation ranges used to scale percentage noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub component_ranges: [f64; OBS_DIM],
}

/// Value range assumed for each target-offset component when scaling noise.
pub const DELTA_COMPONENT_RANGE_M: f64 = 2.0;

impl NoiseModel {
    /// Offset components use the workspace-scale range; joint components use
    /// each joint's limit span.
    pub fn for_arm(arm: &ArmModel) -> Self {
        let span = |i: usize| arm.joint_limits[i].1 - arm.joint_limits[i].0;
        NoiseModel {
            component_ranges: [
                DELTA_COMPONENT_RANGE_M,
                DELTA_COMPONENT_RANGE_M,
                DELTA_COMPONENT_RANGE_M,
                span(0),
                span(1),
            ],
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::for_arm(&ArmModel::default())
    }
}

/// Adds uniform noise of up to `pct`% of each component's range. Always
/// consumes exactly one draw per component.
pub fn apply_noise(
    obs: &Observation,
    pct: f64,
    model: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> Observation {
    let mut out = *obs;
    for (o, &range) in out.iter_mut().zip(model.component_ranges.iter()) {
        let bound = pct / 100.0 * range;
        *o += bound * rng.gen_range(-1.0..=1.0);
    }
    out
}

/// Samples log-uniformly from `[lo, hi]`.
pub fn log_uniform(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

enum ParamSource {
    /// Fresh values drawn each episode.
    Sampled(RandomizationSet),
    /// The same values every episode (proxy-real evaluation).
    Fixed(EpisodeParams),
}

/// A [`ReacherEnv`] wrapped with the randomization pipeline.
///
/// Order of effects per step: actuation response shapes the velocities fed
/// to the dynamics, latency selects which true observation the agent sees,
/// noise perturbs that observation. Rewards and termination always follow
/// the true state.
///
/// Construction performs the first episode's parameter draw and yields a
/// ready observation via [`RandomizedEnv::current_observation`]; call
/// [`RandomizedEnv::reset`] only to begin subsequent episodes.
pub struct RandomizedEnv {
    inner: ReacherEnv,
    source: ParamSource,
    noise_model: NoiseModel,
    draw_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    params: EpisodeParams,
    delay_steps: usize,
    alpha: Option<f64>,
    /// True observations of the current episode, indexed by step.
    history: Vec<Observation>,
    effective_obs: Observation,
    draw_log: Vec<EpisodeParams>,
}

impl RandomizedEnv {
    /// Wraps `inner` so the active properties in `set` are redrawn each
    /// episode. `seed` controls draws and noise only; dynamics stay
    /// deterministic.
    pub fn new(inner: ReacherEnv, set: RandomizationSet, seed: u64) -> Result<Self> {
        set.validate()?;
        Self::build(inner, ParamSource::Sampled(set), seed)
    }

    /// Wraps `inner` with the same parameter values every episode. Noise
    /// realizations (if any) are still random per step.
    pub fn fixed(inner: ReacherEnv, params: EpisodeParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Self::build(inner, ParamSource::Fixed(params), seed)
    }

    fn build(inner: ReacherEnv, source: ParamSource, seed: u64) -> Result<Self> {
        let noise_model = NoiseModel::for_arm(inner.arm());
        let mut env = RandomizedEnv {
            inner,
            source,
            noise_model,
            draw_rng: derive_rng(seed, &[stream::DRAWS]),
            noise_rng: derive_rng(seed, &[stream::NOISE]),
            params: EpisodeParams::default(),
            delay_steps: 0,
            alpha: None,
            history: Vec::new(),
            effective_obs: [0.0; OBS_DIM],
            draw_log: Vec::new(),
        };
        env.begin_episode();
        Ok(env)
    }

    /// Draw order is fixed (actuation, latency, noise) so identical seeds
    /// yield identical draw sequences.
    fn draw_params(&mut self) -> EpisodeParams {
        match &self.source {
            ParamSource::Fixed(p) => *p,
            ParamSource::Sampled(set) => {
                let mut p = EpisodeParams::default();
                if let Some(t) = set.torque {
                    p.actuation = Some(ActuationParams {
                        stiffness: log_uniform(t.stiffness.0, t.stiffness.1, &mut self.draw_rng),
                        damping: log_uniform(t.damping.0, t.damping.1, &mut self.draw_rng),
                    });
                }
                if let Some((lo, hi)) = set.latency_s {
                    p.latency_s = Some(if lo == hi {
                        lo
                    } else {
                        self.draw_rng.gen_range(lo..=hi)
                    });
                }
                if let Some((lo, hi)) = set.noise_pct {
                    p.noise_pct = Some(if lo == hi {
                        lo
                    } else {
                        self.draw_rng.gen_range(lo..=hi)
                    });
                }
                p
            }
        }
    }

    fn begin_episode(&mut self) {
        let first_true = self.inner.reset();
        self.params = self.draw_params();
        self.draw_log.push(self.params);
        self.delay_steps = self.params.delay_steps(self.inner.spec().dt);
        self.alpha = self.params.actuation.map(|a| a.alpha(self.inner.spec().dt));
        self.history.clear();
        self.history.push(first_true);
        self.effective_obs = self.observe(0);
    }

    /// Delayed-then-noised view of the true observation at `step`.
    fn observe(&mut self, step: usize) -> Observation {
        let delayed = self.history[step.saturating_sub(self.delay_steps)];
        match self.params.noise_pct {
            Some(pct) => apply_noise(&delayed, pct, &self.noise_model, &mut self.noise_rng),
            None => delayed,
        }
    }

    /// Starts a new episode: resets the dynamics and redraws parameters.
    pub fn reset(&mut self) -> Observation {
        self.begin_episode();
        self.effective_obs
    }

    /// Steps the dynamics; the returned observation is the delayed, noised
    /// view while reward/termination/ee_pos reflect the true state.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        let alpha = self.alpha;
        let result = self.inner.step_shaped(action, move |prev, cmd| match alpha {
            Some(a) => [prev[0] + a * (cmd[0] - prev[0]), prev[1] + a * (cmd[1] - prev[1])],
            None => cmd,
        })?;
        self.history.push(result.observation);
        self.effective_obs = self.observe(result.step_index);
        Ok(StepResult { observation: self.effective_obs, ..result })
    }

    /// The observation the agent should act on right now.
    pub fn current_observation(&self) -> Observation {
        self.effective_obs
    }

    /// Values in effect for the current episode.
    pub fn current_params(&self) -> &EpisodeParams {
        &self.params
    }

    /// One entry per episode started, in order.
    pub fn draw_log(&self) -> &[EpisodeParams] {
        &self.draw_log
    }

    pub fn inner(&self) -> &ReacherEnv {
        &self.inner
    }

    pub fn terminated(&self) -> bool {
        self.inner.terminated()
    }

    pub fn truncated(&self) -> bool {
        self.inner.truncated()
    }

    pub fn step_index(&self) -> usize {
        self.inner.step_index()
    }

    pub fn distance_to_target(&self) -> f64 {
        self.inner.distance_to_target()
    }

    pub fn ee_position(&self) -> [f64; 3] {
        self.inner.ee_position()
    }
}
