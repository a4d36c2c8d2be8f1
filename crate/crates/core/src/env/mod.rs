//! Benchmark environments with a uniform reset/step interface.
//!
//! Within-episode dynamics are deterministic; only the reset draws from the
//! seed. Every environment is a pure function of its observation, so the same
//! dynamics double as an exact "oracle" world model for the planner.

mod catch_point;
mod hard_move;
mod linear;
mod platform;

pub use catch_point::CatchPoint;
pub use hard_move::HardMove;
pub use linear::{spectral_norm, LinearPamdp};
pub use platform::Platform;

use rand::Rng;

use crate::action::{ParamAction, ParamActionSpec};
use crate::error::{Error, Result};
use crate::rng;

/// Result of applying one action to an observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: Vec<f64>,
    pub reward: f64,
    /// 1.0 while the episode continues, 0.0 on termination.
    pub cont: f64,
    /// Task-level success (goal reached, point caught, end of track).
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    Platform,
    CatchPoint,
    HardMove { n: usize },
    Linear(LinearPamdp),
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_spec: ParamActionSpec,
    pub max_steps: usize,
}

/// Episode state: the observation is the full environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub step_count: usize,
    pub done: bool,
}

/// What one `step` call reports besides the new state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub reward: f64,
    pub cont: f64,
    pub success: bool,
    /// Episode ended on the step cap rather than by termination.
    pub truncated: bool,
}

impl EnvSpec {
    pub fn platform() -> Self {
        Self {
            kind: EnvKind::Platform,
            state_dim: Platform::STATE_DIM,
            action_spec: ParamActionSpec::new(vec![1, 1, 1]).expect("static spec"),
            max_steps: Platform::MAX_STEPS,
        }
    }

    pub fn catch_point() -> Self {
        Self {
            kind: EnvKind::CatchPoint,
            state_dim: CatchPoint::STATE_DIM,
            action_spec: ParamActionSpec::new(vec![2, 0]).expect("static spec"),
            max_steps: CatchPoint::MAX_STEPS,
        }
    }

    /// Hard Move with `n` actuators (`2^n` discrete actions, `n` parameters each).
    /// The benchmark family uses n in {4, 6, 8, 10}.
    pub fn hard_move(n: usize) -> Result<Self> {
        if !(1..=12).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "hard_move needs 1..=12 actuators, got {n}"
            )));
        }
        Ok(Self {
            kind: EnvKind::HardMove { n },
            state_dim: HardMove::STATE_DIM,
            action_spec: ParamActionSpec::new(vec![n; 1 << n])?,
            max_steps: HardMove::MAX_STEPS,
        })
    }

    pub fn linear(model: LinearPamdp) -> Self {
        Self {
            state_dim: model.state_dim(),
            action_spec: model.action_spec().clone(),
            max_steps: model.max_steps,
            kind: EnvKind::Linear(model),
        }
    }

    /// Looks an environment up by its configuration name.
    pub fn by_name(name: &str, n_actuators: usize) -> Result<Self> {
        match name {
            "platform" => Ok(Self::platform()),
            "catch_point" => Ok(Self::catch_point()),
            "hard_move" => Self::hard_move(n_actuators),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EnvKind::Platform => "platform",
            EnvKind::CatchPoint => "catch_point",
            EnvKind::HardMove { .. } => "hard_move",
            EnvKind::Linear(_) => "linear",
        }
    }

    /// Initial state for `seed`.
    pub fn reset(&self, seed: u64) -> EnvState {
        let mut r = rng::stream(rng::derive(seed, rng::labels::ENV_RESET), 0);
        let observation = match &self.kind {
            EnvKind::Platform => Platform::initial(),
            EnvKind::CatchPoint => CatchPoint::initial(&mut r),
            EnvKind::HardMove { .. } => HardMove::initial(&mut r),
            EnvKind::Linear(m) => m.initial(&mut r),
        };
        EnvState {
            observation,
            step_count: 0,
            done: false,
        }
    }

    /// Applies `a` to `state`.
    pub fn step(&self, state: &EnvState, a: &ParamAction) -> Result<(EnvState, StepInfo)> {
        if state.done {
            return Err(Error::StepAfterDone);
        }
        self.action_spec.check(a)?;
        let out = self.dynamics(&state.observation, a);
        let step_count = state.step_count + 1;
        let terminated = out.cont == 0.0;
        let truncated = !terminated && step_count >= self.max_steps;
        Ok((
            EnvState {
                observation: out.next,
                step_count,
                done: terminated || truncated,
            },
            StepInfo {
                reward: out.reward,
                cont: out.cont,
                success: out.success,
                truncated,
            },
        ))
    }

    /// Pure transition function on observations. Terminal observations are
    /// absorbing (zero reward, `cont = 0`).
    pub fn dynamics(&self, obs: &[f64], a: &ParamAction) -> Outcome {
        match &self.kind {
            EnvKind::Platform => Platform::dynamics(obs, a),
            EnvKind::CatchPoint => CatchPoint::dynamics(obs, a),
            EnvKind::HardMove { n } => HardMove::dynamics(*n, obs, a),
            EnvKind::Linear(m) => m.dynamics(obs, a),
        }
    }

    /// Draws a non-terminal state from the environment's state space, used by
    /// the Lipschitz estimators.
    pub fn sample_state<R: Rng + ?Sized>(&self, r: &mut R) -> Vec<f64> {
        match &self.kind {
            EnvKind::Platform => Platform::sample_state(r),
            EnvKind::CatchPoint => CatchPoint::sample_state(r),
            EnvKind::HardMove { .. } => HardMove::sample_state(r),
            EnvKind::Linear(m) => m.sample_state(r),
        }
    }

    /// Uniform action: `k` uniform, parameters uniform in `[-1, 1]`.
    pub fn random_action<R: Rng + ?Sized>(&self, r: &mut R) -> ParamAction {
        uniform_action(&self.action_spec, r)
    }
}

pub fn uniform_action<R: Rng + ?Sized>(spec: &ParamActionSpec, r: &mut R) -> ParamAction {
    let k = r.random_range(0..spec.num_discrete());
    let z = (0..spec.param_dim(k))
        .map(|_| r.random_range(-1.0..=1.0))
        .collect();
    ParamAction::new(k, z)
}
