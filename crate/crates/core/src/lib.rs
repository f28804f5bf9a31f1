//! Continual domain randomization lab.
//!
//! A self-contained training stack for studying how sequential exposure to
//! randomized simulation parameters, combined with elastic weight
//! consolidation, affects zero-shot transfer of a reaching policy to a
//! held-out "proxy real" environment.
//!
//! Layering (bottom to top):
//! - [`env`]: deterministic two-joint reacher simulation.
//! - [`randomization`]: latency / observation-noise / actuation-response
//!   wrappers and their sampling ranges.
//! - [`nn`]: small dense networks with analytic gradients.
//! - [`ppo`]: clipped-surrogate policy optimization on top of [`nn`].
//! - [`continual`]: Fisher-weighted parameter anchoring (EWC and its online
//!   variant).
//! - [`strategies`]: phase schedules (ideal / randomized / finetuning / CDR)
//!   and the driver that trains through them.
//! - [`evalkit`]: frozen-policy rollouts, per-episode metrics, aggregation.
//! - [`snapshot`]: serialization of models plus consolidation state.

pub mod continual;
pub mod env;
pub mod error;
pub mod evalkit;
pub mod nn;
pub mod ppo;
pub mod randomization;
pub mod rng;
pub mod snapshot;
pub mod strategies;

pub use error::{Error, Result};
