use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ActionBatch;
use crate::action::ParamActionSpec;
use crate::env::EnvSpec;
use crate::error::{Error, Result};

/// One batched imagined step.
#[derive(Debug, Clone)]
pub struct StepPrediction {
    pub next: Array2<f64>,
    pub reward: Array1<f64>,
    /// Binarized continuation, 0.0 or 1.0.
    pub flag: Array1<f64>,
    /// Raw continuation output before thresholding.
    pub cont_mean: Array1<f64>,
}

/// Per-timestep standard-normal noise for a batched rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutNoise {
    /// `[N, state_dim]` per step.
    pub state: Vec<Array2<f64>>,
    /// `[N, 1]` per step.
    pub reward: Vec<Array2<f64>>,
}

impl RolloutNoise {
    pub fn zeros(n: usize, state_dim: usize, steps: usize) -> Self {
        Self {
            state: vec![Array2::zeros((n, state_dim)); steps],
            reward: vec![Array2::zeros((n, 1)); steps],
        }
    }

    /// Fills row `row` for every step from `rng`: the state noise of each
    /// step followed by its reward noise.
    pub fn fill_row<R: Rng + ?Sized>(&mut self, row: usize, rng: &mut R) {
        for (st, rw) in self.state.iter_mut().zip(self.reward.iter_mut()) {
            for v in st.row_mut(row).iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            rw[[row, 0]] = StandardNormal.sample(rng);
        }
    }

    pub fn steps(&self) -> usize {
        self.state.len()
    }
}

/// Imagined trajectories for a batch of start states.
#[derive(Debug, Clone)]
pub struct Rollout {
    /// `T + 1` entries; the first is the start batch.
    pub states: Vec<Array2<f64>>,
    /// `[N, T]`.
    pub rewards: Array2<f64>,
    /// `[N, T]`, 0.0 or 1.0.
    pub flags: Array2<f64>,
}

/// Anything the planner can imagine with.
pub trait WorldModel: Sync {
    fn state_dim(&self) -> usize;

    fn action_spec(&self) -> &ParamActionSpec;

    fn step(
        &self,
        states: ArrayView2<f64>,
        actions: &ActionBatch,
        state_noise: Option<ArrayView2<f64>>,
        reward_noise: Option<ArrayView2<f64>>,
    ) -> Result<StepPrediction>;

    /// Open-loop rollout feeding each predicted state back in.
    fn imagine(
        &self,
        start: ArrayView2<f64>,
        actions: &[ActionBatch],
        noise: Option<&RolloutNoise>,
    ) -> Result<Rollout> {
        let n = start.nrows();
        let steps = actions.len();
        if let Some(nz) = noise {
            if nz.steps() < steps {
                return Err(Error::ShapeMismatch(format!(
                    "{} noise steps for {} actions",
                    nz.steps(),
                    steps
                )));
            }
        }
        let mut states = Vec::with_capacity(steps + 1);
        states.push(start.to_owned());
        let mut rewards = Array2::zeros((n, steps));
        let mut flags = Array2::zeros((n, steps));
        for (t, a) in actions.iter().enumerate() {
            let pred = self.step(
                states[t].view(),
                a,
                noise.map(|nz| nz.state[t].view()),
                noise.map(|nz| nz.reward[t].view()),
            )?;
            rewards.column_mut(t).assign(&pred.reward);
            flags.column_mut(t).assign(&pred.flag);
            states.push(pred.next);
        }
        Ok(Rollout {
            states,
            rewards,
            flags,
        })
    }
}

/// The true environment dynamics behind the world-model interface. Noise is
/// ignored since the environments are deterministic within an episode.
#[derive(Debug, Clone)]
pub struct EnvOracle {
    env: EnvSpec,
}

impl EnvOracle {
    pub fn new(env: EnvSpec) -> Self {
        Self { env }
    }

    pub fn env(&self) -> &EnvSpec {
        &self.env
    }
}

impl WorldModel for EnvOracle {
    fn state_dim(&self) -> usize {
        self.env.state_dim
    }

    fn action_spec(&self) -> &ParamActionSpec {
        &self.env.action_spec
    }

    fn step(
        &self,
        states: ArrayView2<f64>,
        actions: &ActionBatch,
        _state_noise: Option<ArrayView2<f64>>,
        _reward_noise: Option<ArrayView2<f64>>,
    ) -> Result<StepPrediction> {
        let n = states.nrows();
        if states.ncols() != self.env.state_dim || actions.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "oracle step on {}x{} states with {} actions",
                n,
                states.ncols(),
                actions.len()
            )));
        }
        let mut next = Array2::zeros((n, self.env.state_dim));
        let mut reward = Array1::zeros(n);
        let mut flag = Array1::zeros(n);
        for i in 0..n {
            let obs = states.row(i).to_vec();
            let out = self.env.dynamics(&obs, &actions.actions[i]);
            next.row_mut(i).assign(&Array1::from(out.next));
            reward[i] = out.reward;
            flag[i] = out.cont;
        }
        Ok(StepPrediction {
            next,
            reward,
            cont_mean: flag.clone(),
            flag,
        })
    }
}
