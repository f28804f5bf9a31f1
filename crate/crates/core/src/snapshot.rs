//! Run checkpoints: a JSON container holding everything needed to resume a
//! run at a phase boundary or to evaluate a trained agent later — the run
//! spec, the phase plan and progress, flat network parameters, and the
//! consolidation state. Parameters survive the round trip bit-for-bit
//! (shortest-round-trip float formatting), so a resumed run continues
//! exactly where the checkpointed one stopped.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continual::ConsolidationState;
use crate::error::{Error, Result};
use crate::nn::{GaussianPolicy, Mlp};
use crate::rng::{derive_rng, stream};
use crate::strategies::{PhasePlan, RunSpec, StrategyRun};

pub const FORMAT_VERSION: u32 = 1;

/// Serializable state of a run at a phase boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub spec: RunSpec,
    /// Strategy label used in the logs (differs from `spec.strategy`'s
    /// name for importance presets).
    pub label: String,
    pub plan: Vec<PhasePlan>,
    pub phases_done: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub actor_params: Vec<f64>,
    pub critic_params: Vec<f64>,
    pub consolidation: ConsolidationState,
}

impl Checkpoint {
    /// Captures a run's current state. Call at a phase boundary — mid-phase
    /// progress is not representable.
    pub fn capture(run: &StrategyRun) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            spec: run.spec().clone(),
            label: run.label().to_string(),
            plan: run.plan().to_vec(),
            phases_done: run.phase_index(),
            obs_dim: crate::env::OBS_DIM,
            act_dim: crate::env::ACTION_DIM,
            hidden: run.spec().hidden.clone(),
            actor_params: run.policy.params(),
            critic_params: run.critic.params(),
            consolidation: run.consolidation.clone(),
        }
    }

    /// Rebuilds the run driver, positioned at the checkpointed phase
    /// boundary.
    pub fn restore(self) -> Result<StrategyRun> {
        self.validate()?;
        let (policy, critic) = self.build_networks()?;
        StrategyRun::resume(
            self.spec,
            self.plan,
            self.label,
            policy,
            critic,
            self.consolidation,
            self.phases_done,
        )
    }

    /// Rebuilds just the networks (for evaluation without resuming).
    pub fn build_networks(&self) -> Result<(GaussianPolicy, Mlp)> {
        self.validate()?;
        // Construction only fixes the shapes; parameters are overwritten.
        let mut scaffold_rng = derive_rng(self.spec.seed, &[stream::INIT]);
        let mut policy =
            GaussianPolicy::new(self.obs_dim, &self.hidden, self.act_dim, &mut scaffold_rng)?;
        let mut critic_sizes = vec![self.obs_dim];
        critic_sizes.extend_from_slice(&self.hidden);
        critic_sizes.push(1);
        let mut critic = Mlp::new(&critic_sizes, 1.0, &mut scaffold_rng)?;
        policy.set_params(&self.actor_params)?;
        critic.set_params(&self.critic_params)?;
        Ok((policy, critic))
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::input(format!(
                "checkpoint format version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.obs_dim != crate::env::OBS_DIM || self.act_dim != crate::env::ACTION_DIM {
            return Err(Error::input(format!(
                "checkpoint architecture {}->{} does not match this build's {}->{}",
                self.obs_dim,
                self.act_dim,
                crate::env::OBS_DIM,
                crate::env::ACTION_DIM
            )));
        }
        if self.hidden != self.spec.hidden {
            return Err(Error::input(
                "checkpoint hidden-layer widths disagree with its run spec",
            ));
        }
        if self.phases_done > self.plan.len() {
            return Err(Error::input(format!(
                "checkpoint claims {} finished phases, plan has {}",
                self.phases_done,
                self.plan.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Checkpoint> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
