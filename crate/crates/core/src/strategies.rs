//! Training strategies: phase schedules and the run driver.
//!
//! A strategy maps a step budget onto a sequence of phases, each training in
//! one randomization regime. `ideal` and `randomized` are single-phase
//! baselines (no randomization / all randomizations at once). The sequential
//! strategies pretrain without randomization and then visit the three
//! randomizations one at a time in a configurable order; `finetuning` does
//! so without any consolidation, while the EWC variants consolidate the
//! actor after every phase. The driver advances one phase at a time so runs
//! can checkpoint and resume at phase boundaries, and evaluates snapshots on
//! the frozen ideal and proxy-real environments at a fixed cadence.

use serde::{Deserialize, Serialize};

use crate::continual::{
    collect_fisher_samples, compute_fisher_diag, normalize_fisher, ConsolidationPenalty,
    ConsolidationState, EwcConfig, EwcState, OnlineEwcState,
};
use crate::env::{ArmModel, EpisodeSpec, ReacherEnv};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalEnv, EvalRecord};
use crate::nn::{Adam, GaussianPolicy, Mlp};
use crate::ppo::{collect_rollout, ppo_update, EpisodeTracker, PpoConfig};
use crate::randomization::{
    proxy_real_params, RandKind, RandomizationRanges, RandomizationSet, RandomizedEnv,
};
use crate::rng::{derive_rng, derive_seed, stream};

/// The five training strategies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    /// One phase on the unrandomized simulator.
    Ideal,
    /// One phase with all three randomizations active.
    Randomized,
    /// Pretrain, then the three single-randomization phases, no
    /// consolidation.
    Finetuning,
    /// Like finetuning, with an anchor-per-task penalty after every phase.
    CdrEwc,
    /// Like finetuning, with a single decayed anchor after every phase.
    CdrOnlineEwc,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Ideal,
        StrategyKind::Randomized,
        StrategyKind::Finetuning,
        StrategyKind::CdrEwc,
        StrategyKind::CdrOnlineEwc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::Ideal => "ideal",
            StrategyKind::Randomized => "randomized",
            StrategyKind::Finetuning => "finetuning",
            StrategyKind::CdrEwc => "cdr_ewc",
            StrategyKind::CdrOnlineEwc => "cdr_online_ewc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ideal" => Ok(StrategyKind::Ideal),
            "randomized" => Ok(StrategyKind::Randomized),
            "finetuning" => Ok(StrategyKind::Finetuning),
            "cdr_ewc" => Ok(StrategyKind::CdrEwc),
            "cdr_online_ewc" => Ok(StrategyKind::CdrOnlineEwc),
            other => Err(Error::input(format!(
                "unknown strategy `{other}` (expected ideal, randomized, finetuning, cdr_ewc or cdr_online_ewc)"
            ))),
        }
    }

    /// Whether the strategy trains phase-by-phase through the single
    /// randomizations (as opposed to one monolithic phase).
    pub fn is_sequential(&self) -> bool {
        matches!(
            self,
            StrategyKind::Finetuning | StrategyKind::CdrEwc | StrategyKind::CdrOnlineEwc
        )
    }

    /// Whether phases end with an actor consolidation.
    pub fn consolidates(&self) -> bool {
        matches!(self, StrategyKind::CdrEwc | StrategyKind::CdrOnlineEwc)
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Order in which the sequential strategies visit the randomizations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseOrdering {
    /// Torque response, then latency, then noise.
    Tln,
    /// Noise, then latency, then torque response.
    Nlt,
}

impl PhaseOrdering {
    pub const ALL: [PhaseOrdering; 2] = [PhaseOrdering::Tln, PhaseOrdering::Nlt];

    pub fn kinds(&self) -> [RandKind; 3] {
        match self {
            PhaseOrdering::Tln => [RandKind::Torque, RandKind::Latency, RandKind::Noise],
            PhaseOrdering::Nlt => [RandKind::Noise, RandKind::Latency, RandKind::Torque],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseOrdering::Tln => "tln",
            PhaseOrdering::Nlt => "nlt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tln" => Ok(PhaseOrdering::Tln),
            "nlt" => Ok(PhaseOrdering::Nlt),
            other => Err(Error::input(format!("unknown ordering `{other}` (expected tln or nlt)"))),
        }
    }
}

impl std::fmt::Display for PhaseOrdering {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One training phase: its environment regime and step budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub name: String,
    pub set: RandomizationSet,
    pub budget: usize,
    /// Consolidate the actor when the phase's budget is spent.
    pub consolidate_after: bool,
}

fn kind_name(kind: RandKind) -> &'static str {
    match kind {
        RandKind::Torque => "torque",
        RandKind::Latency => "latency",
        RandKind::Noise => "noise",
    }
}

/// Expands a strategy into its phase sequence. Sequential strategies split
/// `total_budget` into a pretrain phase plus three equal single-param
/// phases; an unequal split is a configuration error.
pub fn build_schedule(
    kind: StrategyKind,
    ordering: PhaseOrdering,
    ranges: &RandomizationRanges,
    total_budget: usize,
    pretrain_budget: usize,
) -> Result<Vec<PhasePlan>> {
    if total_budget == 0 {
        return Err(Error::config("total training budget must be at least 1 step"));
    }
    match kind {
        StrategyKind::Ideal => Ok(vec![PhasePlan {
            name: "ideal".into(),
            set: RandomizationSet::none(),
            budget: total_budget,
            consolidate_after: false,
        }]),
        StrategyKind::Randomized => Ok(vec![PhasePlan {
            name: "randomized".into(),
            set: RandomizationSet::all(ranges),
            budget: total_budget,
            consolidate_after: false,
        }]),
        StrategyKind::Finetuning | StrategyKind::CdrEwc | StrategyKind::CdrOnlineEwc => {
            if pretrain_budget > total_budget {
                return Err(Error::config(format!(
                    "pretrain budget {pretrain_budget} exceeds total budget {total_budget}"
                )));
            }
            let remaining = total_budget - pretrain_budget;
            if remaining % 3 != 0 {
                return Err(Error::config(format!(
                    "budget after pretraining ({remaining} steps) must split evenly over the 3 randomization phases"
                )));
            }
            let per_phase = remaining / 3;
            let consolidate = kind.consolidates();
            let mut plan = vec![PhasePlan {
                name: "pretrain".into(),
                set: RandomizationSet::none(),
                budget: pretrain_budget,
                consolidate_after: consolidate,
            }];
            for k in ordering.kinds() {
                plan.push(PhasePlan {
                    name: kind_name(k).into(),
                    set: RandomizationSet::single(k, ranges),
                    budget: per_phase,
                    consolidate_after: consolidate,
                });
            }
            Ok(plan)
        }
    }
}

/// A from-scratch schedule with exactly one single-randomization phase; the
/// per-parameter arm of the importance study.
pub fn single_param_importance_preset(
    kind: RandKind,
    ranges: &RandomizationRanges,
    budget: usize,
) -> Result<Vec<PhasePlan>> {
    if budget == 0 {
        return Err(Error::config("importance phase budget must be at least 1 step"));
    }
    Ok(vec![PhasePlan {
        name: format!("single_{}", kind_name(kind)),
        set: RandomizationSet::single(kind, ranges),
        budget,
        consolidate_after: false,
    }])
}

/// Everything one run needs: identity, schedule parameters, and
/// hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: String,
    pub strategy: StrategyKind,
    pub ordering: PhaseOrdering,
    pub seed: u64,
    pub total_budget: usize,
    pub pretrain_budget: usize,
    pub ranges: RandomizationRanges,
    pub arm: ArmModel,
    pub episode: EpisodeSpec,
    pub ppo: PpoConfig,
    pub ewc: EwcConfig,
    /// Hidden-layer widths shared by actor and critic.
    pub hidden: Vec<usize>,
    /// Episodes per evaluation environment at each snapshot.
    pub eval_episodes: usize,
    /// Snapshot cadence as a fraction of the total budget.
    pub eval_fraction: f64,
    /// Average squared distances in the target-distance metric.
    pub squared_distance: bool,
}

impl RunSpec {
    /// Desk-scale defaults for a given run identity.
    pub fn desk(run_id: &str, strategy: StrategyKind, ordering: PhaseOrdering, seed: u64) -> Self {
        RunSpec {
            run_id: run_id.to_string(),
            strategy,
            ordering,
            seed,
            total_budget: 400_000,
            pretrain_budget: 100_000,
            ranges: RandomizationRanges::default(),
            arm: ArmModel::default(),
            episode: EpisodeSpec::default(),
            ppo: PpoConfig::default(),
            ewc: EwcConfig::default(),
            hidden: vec![64, 64],
            eval_episodes: 10,
            eval_fraction: 0.02,
            squared_distance: false,
        }
    }

    /// Validates everything except the schedule split (used for runs with an
    /// explicit phase plan).
    pub fn validate_components(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(Error::config("run id must not be empty"));
        }
        if self.hidden.is_empty() || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("hidden layer widths must be nonzero and nonempty"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("evaluation needs at least 1 episode per snapshot"));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction <= 1.0) {
            return Err(Error::config(format!(
                "evaluation cadence fraction must be in (0, 1], got {}",
                self.eval_fraction
            )));
        }
        self.arm.validate()?;
        self.episode.validate(&self.arm)?;
        self.ppo.validate()?;
        self.ewc.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_components()?;
        // Surfaces schedule errors (e.g. indivisible budgets) early.
        build_schedule(self.strategy, self.ordering, &self.ranges, self.total_budget, self.pretrain_budget)?;
        Ok(())
    }

    fn eval_every(&self) -> usize {
        ((self.total_budget as f64 * self.eval_fraction).round() as usize).max(1)
    }
}

/// One PPO update's log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub run_id: String,
    pub phase: usize,
    pub timestep: usize,
    pub mean_ep_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub penalty: f64,
    pub entropy: f64,
}

impl TrainingRow {
    pub const CSV_HEADER: &'static str =
        "run_id,phase,timestep,mean_ep_reward,actor_loss,critic_loss,penalty,entropy";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.run_id,
            self.phase,
            self.timestep,
            self.mean_ep_reward,
            self.actor_loss,
            self.critic_loss,
            self.penalty,
            self.entropy
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::usage(format!(
                "a training row has 8 fields, got {}: {row:?}",
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::usage(format!("field {i} of {row:?} is not a number")))
        };
        let index = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| Error::usage(format!("field {i} of {row:?} is not an index")))
        };
        Ok(TrainingRow {
            run_id: fields[0].to_string(),
            phase: index(1)?,
            timestep: index(2)?,
            mean_ep_reward: num(3)?,
            actor_loss: num(4)?,
            critic_loss: num(5)?,
            penalty: num(6)?,
            entropy: num(7)?,
        })
    }
}

/// One episode's sampled simulation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawRow {
    pub phase: usize,
    pub episode: usize,
    pub latency_s: Option<f64>,
    pub noise_pct: Option<f64>,
    pub stiffness: Option<f64>,
    pub damping: Option<f64>,
}

impl DrawRow {
    pub const CSV_HEADER: &'static str = "phase,episode,latency_s,noise_pct,stiffness,damping";

    pub fn to_csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.phase,
            self.episode,
            opt(self.latency_s),
            opt(self.noise_pct),
            opt(self.stiffness),
            opt(self.damping)
        )
    }
}

/// Logs produced by one phase.
#[derive(Clone, Debug, Default)]
pub struct PhaseOutcome {
    pub phase_index: usize,
    pub phase_name: String,
    pub training: Vec<TrainingRow>,
    pub evals: Vec<EvalRecord>,
    pub draws: Vec<DrawRow>,
}

/// Logs of a whole run.
#[derive(Clone, Debug, Default)]
pub struct RunArtifacts {
    pub training: Vec<TrainingRow>,
    pub evals: Vec<EvalRecord>,
    pub draws: Vec<DrawRow>,
}

impl RunArtifacts {
    pub fn absorb(&mut self, outcome: PhaseOutcome) {
        self.training.extend(outcome.training);
        self.evals.extend(outcome.evals);
        self.draws.extend(outcome.draws);
    }
}

/// Phase-by-phase run driver. Every random stream a phase touches is
/// derived from `(seed, purpose, phase)`, so a run resumed from a
/// phase-boundary checkpoint continues bit-for-bit like an uninterrupted
/// one.
pub struct StrategyRun {
    spec: RunSpec,
    label: String,
    plan: Vec<PhasePlan>,
    pub policy: GaussianPolicy,
    pub critic: Mlp,
    pub consolidation: ConsolidationState,
    phase_index: usize,
    global_step: usize,
    next_eval_at: usize,
    last_mean_ep_reward: f64,
}

fn initial_consolidation(kind: StrategyKind, ewc: &EwcConfig) -> ConsolidationState {
    match kind {
        StrategyKind::CdrEwc => ConsolidationState::Ewc(EwcState::default()),
        StrategyKind::CdrOnlineEwc => {
            ConsolidationState::Online(OnlineEwcState::new(ewc.online_gamma, ewc.lambda))
        }
        _ => ConsolidationState::Disabled,
    }
}

impl StrategyRun {
    /// Fresh run following the strategy's own schedule.
    pub fn new(spec: RunSpec) -> Result<Self> {
        spec.validate()?;
        let plan = build_schedule(
            spec.strategy,
            spec.ordering,
            &spec.ranges,
            spec.total_budget,
            spec.pretrain_budget,
        )?;
        let label = spec.strategy.as_str().to_string();
        Self::with_plan_and_label(spec, plan, label)
    }

    /// Fresh run over an explicit schedule (importance presets), labeled for
    /// the logs.
    pub fn with_plan_and_label(spec: RunSpec, plan: Vec<PhasePlan>, label: String) -> Result<Self> {
        spec.validate_components()?;
        if plan.is_empty() {
            return Err(Error::config("a run needs at least one phase"));
        }
        let mut init_rng = derive_rng(spec.seed, &[stream::INIT]);
        let obs_dim = crate::env::OBS_DIM;
        let act_dim = crate::env::ACTION_DIM;
        let policy = GaussianPolicy::new(obs_dim, &spec.hidden, act_dim, &mut init_rng)?;
        let mut critic_sizes = vec![obs_dim];
        critic_sizes.extend_from_slice(&spec.hidden);
        critic_sizes.push(1);
        let critic = Mlp::new(&critic_sizes, 1.0, &mut init_rng)?;
        let consolidation = initial_consolidation(spec.strategy, &spec.ewc);
        Ok(StrategyRun {
            label,
            plan,
            policy,
            critic,
            consolidation,
            phase_index: 0,
            global_step: 0,
            next_eval_at: 0,
            last_mean_ep_reward: f64::NAN,
            spec,
        })
    }

    /// Rebuilds a run at a phase boundary from checkpointed state.
    pub fn resume(
        spec: RunSpec,
        plan: Vec<PhasePlan>,
        label: String,
        policy: GaussianPolicy,
        critic: Mlp,
        consolidation: ConsolidationState,
        phases_done: usize,
    ) -> Result<Self> {
        if phases_done > plan.len() {
            return Err(Error::input(format!(
                "checkpoint claims {phases_done} finished phases, plan has {}",
                plan.len()
            )));
        }
        let global_step: usize = plan[..phases_done].iter().map(|p| p.budget).sum();
        let eval_every = spec.eval_every();
        let next_eval_at = if global_step == 0 {
            0
        } else {
            (global_step / eval_every + 1) * eval_every
        };
        Ok(StrategyRun {
            spec,
            label,
            plan,
            policy,
            critic,
            consolidation,
            phase_index: phases_done,
            global_step,
            next_eval_at,
            last_mean_ep_reward: f64::NAN,
        })
    }

    pub fn spec(&self) -> &RunSpec {
        &self.spec
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn plan(&self) -> &[PhasePlan] {
        &self.plan
    }

    pub fn phase_index(&self) -> usize {
        self.phase_index
    }

    pub fn global_step(&self) -> usize {
        self.global_step
    }

    pub fn is_finished(&self) -> bool {
        self.phase_index >= self.plan.len()
    }

    /// Runs evaluation snapshots on both frozen environments.
    fn eval_snapshot(&self, timestep: usize, phase: usize) -> Result<Vec<EvalRecord>> {
        let mut out = Vec::new();
        for (env_idx, eval_env) in [EvalEnv::IdealSim, EvalEnv::ProxyReal].into_iter().enumerate() {
            let inner = ReacherEnv::new(self.spec.arm.clone(), self.spec.episode.clone())?;
            let env_seed =
                derive_seed(self.spec.seed, &[stream::EVAL, env_idx as u64, timestep as u64]);
            let mut env = match eval_env {
                EvalEnv::IdealSim => {
                    RandomizedEnv::new(inner, RandomizationSet::none(), env_seed)?
                }
                EvalEnv::ProxyReal => RandomizedEnv::fixed(inner, proxy_real_params(), env_seed)?,
            };
            let metrics =
                evaluate(&self.policy, &mut env, self.spec.eval_episodes, self.spec.squared_distance)?;
            for (episode, m) in metrics.into_iter().enumerate() {
                out.push(EvalRecord {
                    run_id: self.spec.run_id.clone(),
                    strategy: self.label.clone(),
                    ordering: self.spec.ordering.as_str().to_string(),
                    seed: self.spec.seed,
                    phase,
                    timestep,
                    eval_env,
                    episode,
                    r_ep: m.r_ep,
                    continuity: m.continuity,
                    d_tgt: m.d_tgt,
                });
            }
        }
        Ok(out)
    }

    /// Trains the next phase to the end of its budget, evaluating at the
    /// snapshot cadence, and consolidates afterwards if the plan says so.
    pub fn run_next_phase(&mut self) -> Result<PhaseOutcome> {
        if self.is_finished() {
            return Err(Error::usage("all phases of this run are already trained"));
        }
        let phase = self.plan[self.phase_index].clone();
        let pidx = self.phase_index;
        let seed = self.spec.seed;
        let eval_every = self.spec.eval_every();

        let mut outcome = PhaseOutcome {
            phase_index: pidx,
            phase_name: phase.name.clone(),
            ..PhaseOutcome::default()
        };

        // Pre-training baseline snapshot.
        if self.global_step == 0 && self.next_eval_at == 0 {
            outcome.evals.extend(self.eval_snapshot(0, pidx)?);
            self.next_eval_at = eval_every;
        }

        let inner = ReacherEnv::new(self.spec.arm.clone(), self.spec.episode.clone())?;
        let mut env =
            RandomizedEnv::new(inner, phase.set, derive_seed(seed, &[stream::ENV, pidx as u64]))?;
        let mut action_rng = derive_rng(seed, &[stream::POLICY, pidx as u64]);
        let mut shuffle_rng = derive_rng(seed, &[stream::SHUFFLE, pidx as u64]);
        let mut policy_opt = Adam::new(self.policy.param_count(), self.spec.ppo.lr);
        let mut critic_opt = Adam::new(self.critic.param_count(), self.spec.ppo.lr);
        let mut tracker = EpisodeTracker::new();

        // The consolidation state moves into a local so the penalty hook can
        // borrow it while the networks are borrowed mutably.
        let consolidation = std::mem::replace(&mut self.consolidation, ConsolidationState::Disabled);
        let penalty = ConsolidationPenalty {
            state: &consolidation,
            gamma_in_penalty: self.spec.ewc.online_gamma_in_penalty,
        };

        let mut steps_in_phase = 0usize;
        let mut last_eval_step: Option<usize> = None;
        let body = (|| -> Result<()> {
            while steps_in_phase < phase.budget {
                let chunk = (phase.budget - steps_in_phase).min(self.spec.ppo.rollout_horizon);
                let (mut buffer, stats) = collect_rollout(
                    &self.policy,
                    &self.critic,
                    &mut env,
                    chunk,
                    &mut tracker,
                    &mut action_rng,
                )?;
                buffer.process(self.spec.ppo.gamma, self.spec.ppo.gae_lambda)?;
                let update = ppo_update(
                    &mut self.policy,
                    &mut self.critic,
                    &mut policy_opt,
                    &mut critic_opt,
                    &buffer,
                    &self.spec.ppo,
                    Some(&penalty),
                    &mut shuffle_rng,
                )?;
                steps_in_phase += chunk;
                self.global_step += chunk;
                if !stats.episode_returns.is_empty() {
                    self.last_mean_ep_reward = stats.episode_returns.iter().sum::<f64>()
                        / stats.episode_returns.len() as f64;
                }
                outcome.training.push(TrainingRow {
                    run_id: self.spec.run_id.clone(),
                    phase: pidx,
                    timestep: self.global_step,
                    mean_ep_reward: self.last_mean_ep_reward,
                    actor_loss: update.actor_loss,
                    critic_loss: update.critic_loss,
                    penalty: update.penalty,
                    entropy: update.entropy,
                });
                if self.global_step >= self.next_eval_at {
                    outcome.evals.extend(self.eval_snapshot(self.global_step, pidx)?);
                    last_eval_step = Some(self.global_step);
                    self.next_eval_at = (self.global_step / eval_every + 1) * eval_every;
                }
            }
            // Phase-boundary snapshot, unless the cadence just produced one.
            if last_eval_step != Some(self.global_step) {
                outcome.evals.extend(self.eval_snapshot(self.global_step, pidx)?);
                self.next_eval_at = (self.global_step / eval_every + 1) * eval_every;
            }
            Ok(())
        })();
        self.consolidation = consolidation;
        body?;

        for (episode, params) in env.draw_log().iter().enumerate() {
            outcome.draws.push(DrawRow {
                phase: pidx,
                episode,
                latency_s: params.latency_s,
                noise_pct: params.noise_pct,
                stiffness: params.actuation.map(|a| a.stiffness),
                damping: params.actuation.map(|a| a.damping),
            });
        }

        if phase.consolidate_after {
            self.consolidate_on(&phase)?;
        }
        self.phase_index += 1;
        Ok(outcome)
    }

    /// Estimates the Fisher diagonal on the just-finished phase's
    /// environment regime and folds it into the consolidation state. All
    /// randomness comes from dedicated streams, so consolidation never
    /// perturbs training or evaluation.
    fn consolidate_on(&mut self, phase: &PhasePlan) -> Result<()> {
        if matches!(self.consolidation, ConsolidationState::Disabled) {
            return Ok(());
        }
        let pidx = self.phase_index as u64;
        let inner = ReacherEnv::new(self.spec.arm.clone(), self.spec.episode.clone())?;
        let env_seed = derive_seed(self.spec.seed, &[stream::FISHER, pidx, 1]);
        let mut env = RandomizedEnv::new(inner, phase.set, env_seed)?;
        let mut rng = derive_rng(self.spec.seed, &[stream::FISHER, pidx, 0]);
        let buffer = collect_fisher_samples(&self.policy, &mut env, &self.spec.ewc, &mut rng)?;
        let fisher = compute_fisher_diag(&self.policy, &buffer, self.spec.ewc.replay_batch)?;
        let fisher = normalize_fisher(&fisher);
        self.consolidation.consolidate(&self.policy.params(), fisher, &self.spec.ewc);
        Ok(())
    }

    /// Runs every remaining phase and concatenates the logs.
    pub fn run_to_completion(&mut self) -> Result<RunArtifacts> {
        let mut artifacts = RunArtifacts::default();
        while !self.is_finished() {
            artifacts.absorb(self.run_next_phase()?);
        }
        Ok(artifacts)
    }
}
