//! Two-joint reacher simulation.
//!
//! The arm is mounted on a base column: joint 1 yaws the whole arm about the
//! vertical axis, joint 2 pitches the forearm at the elbow. Actions command
//! joint velocities in `[-1, 1]` (scaled by the speed limit) and state is
//! integrated with explicit Euler steps. An episode ends either by breach
//! (a joint leaves its limits, or part of the arm dips below the floor) or by
//! reaching the step cap, which callers treat as truncation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observation layout: `[dx, dy, dz, q1, q2]` where `d = target - ee`.
pub const OBS_DIM: usize = 5;
/// Two commanded joint velocities.
pub const ACTION_DIM: usize = 2;

/// Points sampled along each link (in addition to the joints themselves)
/// when checking for floor contact.
const FLOOR_SAMPLES_PER_LINK: usize = 10;

pub type Observation = [f64; OBS_DIM];
pub type Action = [f64; ACTION_DIM];

/// Kinematic description of the arm.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ArmModel {
    /// Upper-arm and forearm lengths in meters.
    pub link_lengths: [f64; 2],
    /// Height of the shoulder above the floor, in meters.
    pub base_height: f64,
    /// Per-joint `(lo, hi)` position limits in radians.
    pub joint_limits: [(f64, f64); 2],
    /// Magnitude cap on joint velocity, rad/s.
    pub max_joint_speed: f64,
}

impl Default for ArmModel {
    fn default() -> Self {
        ArmModel {
            link_lengths: [0.4, 0.4],
            base_height: 0.3,
            joint_limits: [(-2.0, 2.0), (-2.0, 2.0)],
            // 20 deg/s.
            max_joint_speed: 20.0_f64.to_radians(),
        }
    }
}

impl ArmModel {
    pub fn validate(&self) -> Result<()> {
        for (i, &l) in self.link_lengths.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::config(format!("link {i} length must be positive, got {l}")));
            }
        }
        if !self.base_height.is_finite() || self.base_height < 0.0 {
            return Err(Error::config(format!(
                "base height must be nonnegative, got {}",
                self.base_height
            )));
        }
        for (i, &(lo, hi)) in self.joint_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!("joint {i} limits ({lo}, {hi}) must satisfy lo < hi")));
            }
        }
        if !(self.max_joint_speed.is_finite() && self.max_joint_speed > 0.0) {
            return Err(Error::config(format!(
                "max joint speed must be positive, got {}",
                self.max_joint_speed
            )));
        }
        Ok(())
    }

    /// Shoulder position (top of the base column).
    pub fn shoulder(&self) -> [f64; 3] {
        [0.0, 0.0, self.base_height]
    }

    /// Elbow position for joint angles `q`.
    pub fn elbow(&self, q: [f64; 2]) -> [f64; 3] {
        let l1 = self.link_lengths[0];
        [l1 * q[0].cos(), l1 * q[0].sin(), self.base_height]
    }

    /// End-effector position for joint angles `q`.
    ///
    /// Joint 1 rotates about the world z-axis at the shoulder; joint 2
    /// pitches the forearm in the arm's vertical plane (positive = up).
    pub fn forward_kinematics(&self, q: [f64; 2]) -> [f64; 3] {
        let [l1, l2] = self.link_lengths;
        let radial = l1 + l2 * q[1].cos();
        [
            radial * q[0].cos(),
            radial * q[0].sin(),
            self.base_height + l2 * q[1].sin(),
        ]
    }

    /// Maximum distance from the shoulder the end effector can reach.
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    fn within_limits(&self, q: [f64; 2]) -> bool {
        self.joint_limits
            .iter()
            .zip(q.iter())
            .all(|(&(lo, hi), &qi)| qi >= lo && qi <= hi)
    }

    /// True if any sampled point of either link (joints included) is below
    /// `floor_z`.
    fn touches_floor(&self, q: [f64; 2], floor_z: f64) -> bool {
        let segments = [
            (self.shoulder(), self.elbow(q)),
            (self.elbow(q), self.forward_kinematics(q)),
        ];
        for (a, b) in segments {
            for i in 0..=FLOOR_SAMPLES_PER_LINK {
                let t = i as f64 / FLOOR_SAMPLES_PER_LINK as f64;
                let z = a[2] + t * (b[2] - a[2]);
                if z < floor_z {
                    return true;
                }
            }
        }
        false
    }
}

/// Episode-level parameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpisodeSpec {
    /// Step cap `T`; reaching it without a breach is truncation.
    pub max_steps: usize,
    /// Integration interval in seconds.
    pub dt: f64,
    /// Reaching target in world coordinates.
    pub target: [f64; 3],
    /// Joint angles at reset.
    pub start_q: [f64; 2],
    /// Floor height; arm contact below this terminates the episode.
    pub floor_z: f64,
}

/// Joint angles whose end-effector position is the default target. Placing
/// the target on the reachable surface keeps zero distance attainable.
pub const DEFAULT_TARGET_Q: [f64; 2] = [0.9, 0.6];

impl Default for EpisodeSpec {
    fn default() -> Self {
        EpisodeSpec {
            max_steps: 500,
            dt: 0.02,
            target: ArmModel::default().forward_kinematics(DEFAULT_TARGET_Q),
            start_q: [0.0, 0.0],
            floor_z: 0.0,
        }
    }
}

impl EpisodeSpec {
    pub fn validate(&self, arm: &ArmModel) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.target.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(format!("target must be finite, got {:?}", self.target)));
        }
        if !self.floor_z.is_finite() {
            return Err(Error::config("floor_z must be finite"));
        }
        if !arm.within_limits(self.start_q) {
            return Err(Error::config(format!(
                "start_q {:?} violates joint limits {:?}",
                self.start_q, arm.joint_limits
            )));
        }
        if arm.touches_floor(self.start_q, self.floor_z) {
            return Err(Error::config(format!("start_q {:?} puts the arm below the floor", self.start_q)));
        }
        Ok(())
    }
}

/// Outcome of one simulation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    /// True (un-delayed, noise-free) observation after the step.
    pub observation: Observation,
    pub reward: f64,
    /// Breach termination (joint limit or floor contact). Reaching the step
    /// cap is *not* flagged here; callers detect it from `step_index`.
    pub terminated: bool,
    /// 1-based index of the step that just executed.
    pub step_index: usize,
    /// End-effector position after the step.
    pub ee_pos: [f64; 3],
}

/// The simulation itself. Deterministic: state evolves only through
/// [`ReacherEnv::step`] / [`ReacherEnv::step_shaped`].
#[derive(Clone, Debug)]
pub struct ReacherEnv {
    arm: ArmModel,
    spec: EpisodeSpec,
    q: [f64; 2],
    qdot: [f64; 2],
    step_index: usize,
    terminated: bool,
}

impl ReacherEnv {
    pub fn new(arm: ArmModel, spec: EpisodeSpec) -> Result<Self> {
        arm.validate()?;
        spec.validate(&arm)?;
        let mut env = ReacherEnv {
            q: spec.start_q,
            qdot: [0.0; ACTION_DIM],
            step_index: 0,
            terminated: false,
            arm,
            spec,
        };
        env.reset();
        Ok(env)
    }

    /// Returns the arm to its start configuration and zero velocity.
    pub fn reset(&mut self) -> Observation {
        self.q = self.spec.start_q;
        self.qdot = [0.0; ACTION_DIM];
        self.step_index = 0;
        self.terminated = false;
        self.observation()
    }

    /// Steps with the commanded velocities applied directly.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        self.step_shaped(action, |_prev, cmd| cmd)
    }

    /// Steps with an actuation-response hook: `shape(prev_qdot, commanded)`
    /// returns the joint velocities actually achieved this step. The result
    /// is still clamped to the speed limit before integration.
    pub fn step_shaped(
        &mut self,
        action: Action,
        shape: impl FnOnce([f64; 2], [f64; 2]) -> [f64; 2],
    ) -> Result<StepResult> {
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::input(format!("action must be finite, got {action:?}")));
        }
        if self.terminated {
            return Err(Error::usage("episode already terminated; call reset() first"));
        }
        if self.step_index >= self.spec.max_steps {
            return Err(Error::usage("episode reached its step cap; call reset() first"));
        }
        self.step_index += 1;

        let vmax = self.arm.max_joint_speed;
        let cmd = [
            action[0].clamp(-1.0, 1.0) * vmax,
            action[1].clamp(-1.0, 1.0) * vmax,
        ];
        let shaped = shape(self.qdot, cmd);
        self.qdot = [shaped[0].clamp(-vmax, vmax), shaped[1].clamp(-vmax, vmax)];
        self.q[0] += self.spec.dt * self.qdot[0];
        self.q[1] += self.spec.dt * self.qdot[1];

        let ee = self.arm.forward_kinematics(self.q);
        self.terminated =
            !self.arm.within_limits(self.q) || self.arm.touches_floor(self.q, self.spec.floor_z);

        let d = self.distance_to_target();
        let reward = if self.terminated {
            -d * (self.spec.max_steps - self.step_index) as f64
        } else {
            -d
        };

        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminated: self.terminated,
            step_index: self.step_index,
            ee_pos: ee,
        })
    }

    /// Current true observation: target offset plus joint angles.
    pub fn observation(&self) -> Observation {
        let ee = self.arm.forward_kinematics(self.q);
        [
            self.spec.target[0] - ee[0],
            self.spec.target[1] - ee[1],
            self.spec.target[2] - ee[2],
            self.q[0],
            self.q[1],
        ]
    }

    pub fn distance_to_target(&self) -> f64 {
        let ee = self.arm.forward_kinematics(self.q);
        let dx = self.spec.target[0] - ee[0];
        let dy = self.spec.target[1] - ee[1];
        let dz = self.spec.target[2] - ee[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn ee_position(&self) -> [f64; 3] {
        self.arm.forward_kinematics(self.q)
    }

    pub fn q(&self) -> [f64; 2] {
        self.q
    }

    pub fn qdot(&self) -> [f64; 2] {
        self.qdot
    }

    /// 1-based index of the last executed step (0 right after reset).
    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    /// True once the step cap is reached without a breach.
    pub fn truncated(&self) -> bool {
        !self.terminated && self.step_index >= self.spec.max_steps
    }

    pub fn arm(&self) -> &ArmModel {
        &self.arm
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    /// A bound on the end-effector-to-target distance that holds in every
    /// reachable configuration (triangle inequality through the shoulder).
    pub fn distance_upper_bound(&self) -> f64 {
        let s = self.arm.shoulder();
        let dx = self.spec.target[0] - s[0];
        let dy = self.spec.target[1] - s[1];
        let dz = self.spec.target[2] - s[2];
        self.arm.reach() + (dx * dx + dy * dy + dz * dz).sqrt()
    }
}
