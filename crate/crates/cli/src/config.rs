//! Experiment configuration: TOML file + dotted-path overrides, resolved
//! into per-run specs, and hashed for reproducibility checks.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cdrlab_core::env::{ArmModel, EpisodeSpec};
use cdrlab_core::ppo::PpoConfig;
use cdrlab_core::continual::EwcConfig;
use cdrlab_core::randomization::{RandomizationRanges, TorqueRanges};
use cdrlab_core::strategies::{PhaseOrdering, RunSpec, StrategyKind};

/// Which strategies and orderings an experiment covers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub strategies: Vec<String>,
    pub orderings: Vec<String>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            strategies: StrategyKind::ALL.iter().map(|s| s.as_str().to_string()).collect(),
            orderings: PhaseOrdering::ALL.iter().map(|o| o.as_str().to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Environment steps per run.
    pub total: usize,
    /// Steps of unrandomized pretraining for the sequential strategies.
    pub pretrain: usize,
    /// Steps per single-randomization importance run.
    pub importance: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig { total: 400_000, pretrain: 100_000, importance: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Episodes per evaluation environment at each snapshot.
    pub episodes: usize,
    /// Snapshot cadence as a fraction of the total budget.
    pub fraction: f64,
    /// Average squared distances in the target-distance metric.
    pub d_tgt_squared: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 10, fraction: 0.02, d_tgt_squared: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { hidden: vec![64, 64] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    pub link_lengths: [f64; 2],
    pub base_height: f64,
    /// Symmetric joint limit in radians (both joints span ±limit).
    pub joint_limit: f64,
    /// Maximum joint speed in degrees per second.
    pub max_joint_speed_deg: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        ArmConfig {
            link_lengths: [0.4, 0.4],
            base_height: 0.3,
            joint_limit: 2.0,
            max_joint_speed_deg: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub dt: f64,
    /// Joint angles whose end-effector position becomes the target.
    pub target_q: [f64; 2],
    pub start_q: [f64; 2],
    pub floor_z: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps: 500,
            dt: 0.02,
            target_q: [0.9, 0.6],
            start_q: [0.0, 0.0],
            floor_z: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub latency_range_s: (f64, f64),
    pub noise_range_pct: (f64, f64),
    pub stiffness_range: (f64, f64),
    pub damping_range: (f64, f64),
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        let r = RandomizationRanges::default();
        RandomizationConfig {
            latency_range_s: r.latency_s,
            noise_range_pct: r.noise_pct,
            stiffness_range: r.torque.stiffness,
            damping_range: r.torque.damping,
        }
    }
}

/// The whole experiment file. Every field has the reference default, so an
/// empty file (or no file) is the reference experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Number of seeds; runs use seeds `0..seeds`.
    pub seeds: u64,
    pub matrix: MatrixConfig,
    pub budget: BudgetConfig,
    pub ppo: PpoConfig,
    pub ewc: EwcConfig,
    pub eval: EvalConfig,
    pub network: NetworkConfig,
    pub arm: ArmConfig,
    pub episode: EpisodeConfig,
    pub randomization: RandomizationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "desk".into(),
            seeds: 5,
            matrix: MatrixConfig::default(),
            budget: BudgetConfig::default(),
            ppo: PpoConfig::default(),
            ewc: EwcConfig::default(),
            eval: EvalConfig::default(),
            network: NetworkConfig::default(),
            arm: ArmConfig::default(),
            episode: EpisodeConfig::default(),
            randomization: RandomizationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Loads a config file (optional) and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config file {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config file {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| anyhow!("invalid configuration: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            bail!("configuration error: seeds must be at least 1");
        }
        for s in &self.matrix.strategies {
            StrategyKind::parse(s)?;
        }
        for o in &self.matrix.orderings {
            PhaseOrdering::parse(o)?;
        }
        if self.matrix.strategies.is_empty() || self.matrix.orderings.is_empty() {
            bail!("configuration error: the strategy/ordering matrix must be nonempty");
        }
        // Schedule math and every numeric domain is validated by the run
        // spec; probe one per strategy.
        for s in &self.matrix.strategies {
            let kind = StrategyKind::parse(s)?;
            self.run_spec("probe", kind, PhaseOrdering::Tln, 0)
                .map_err(|e| anyhow!("configuration error in strategy `{s}`: {e}"))?;
        }
        Ok(())
    }

    pub fn arm_model(&self) -> ArmModel {
        ArmModel {
            link_lengths: self.arm.link_lengths,
            base_height: self.arm.base_height,
            joint_limits: [
                (-self.arm.joint_limit, self.arm.joint_limit),
                (-self.arm.joint_limit, self.arm.joint_limit),
            ],
            max_joint_speed: self.arm.max_joint_speed_deg.to_radians(),
        }
    }

    pub fn episode_spec(&self) -> EpisodeSpec {
        let arm = self.arm_model();
        EpisodeSpec {
            max_steps: self.episode.max_steps,
            dt: self.episode.dt,
            target: arm.forward_kinematics(self.episode.target_q),
            start_q: self.episode.start_q,
            floor_z: self.episode.floor_z,
        }
    }

    pub fn ranges(&self) -> RandomizationRanges {
        RandomizationRanges {
            latency_s: self.randomization.latency_range_s,
            noise_pct: self.randomization.noise_range_pct,
            torque: TorqueRanges {
                stiffness: self.randomization.stiffness_range,
                damping: self.randomization.damping_range,
            },
        }
    }

    /// Builds the `RunSpec` for one run in this experiment.
    pub fn run_spec(
        &self,
        run_id: &str,
        strategy: StrategyKind,
        ordering: PhaseOrdering,
        seed: u64,
    ) -> cdrlab_core::Result<RunSpec> {
        let spec = RunSpec {
            run_id: run_id.to_string(),
            strategy,
            ordering,
            seed,
            total_budget: self.budget.total,
            pretrain_budget: self.budget.pretrain,
            ranges: self.ranges(),
            arm: self.arm_model(),
            episode: self.episode_spec(),
            ppo: self.ppo.clone(),
            ewc: self.ewc.clone(),
            hidden: self.network.hidden.clone(),
            eval_episodes: self.eval.episodes,
            eval_fraction: self.eval.fraction,
            squared_distance: self.eval.d_tgt_squared,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical serialization (fixed field order) used for hashing and for
    /// the resolved-config artifact.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing resolved configuration")
    }

    /// Content hash of the resolved configuration.
    pub fn hash(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_toml()?.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    pub fn strategies(&self) -> Result<Vec<StrategyKind>> {
        self.matrix.strategies.iter().map(|s| Ok(StrategyKind::parse(s)?)).collect()
    }

    pub fn orderings(&self) -> Result<Vec<PhaseOrdering>> {
        self.matrix.orderings.iter().map(|o| Ok(PhaseOrdering::parse(o)?)).collect()
    }
}

/// Applies one `dotted.path=value` override to the raw TOML tree. The value
/// side is parsed as TOML (so numbers, booleans, arrays and quoted strings
/// work); a bare word falls back to a string.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (path, raw_value) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{item}` is not of the form key.path=value"))?;
    let path = path.trim();
    if path.is_empty() {
        bail!("override `{item}` has an empty key path");
    }
    let value = parse_override_value(raw_value.trim())
        .with_context(|| format!("parsing the value of override `{item}`"))?;

    let segments: Vec<&str> = path.split('.').collect();
    let mut current = table;
    for seg in &segments[..segments.len() - 1] {
        let entry = current
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry.as_table_mut().ok_or_else(|| {
            anyhow!("override `{item}`: `{seg}` is a value, not a table, in the config file")
        })?;
    }
    current.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

fn parse_override_value(raw: &str) -> Result<toml::Value> {
    let provisional = format!("v = {raw}");
    if let Ok(mut t) = provisional.parse::<toml::Table>() {
        if let Some(v) = t.remove("v") {
            return Ok(v);
        }
    }
    // Bare words (e.g. strategy names) read as strings.
    Ok(toml::Value::String(raw.to_string()))
}
