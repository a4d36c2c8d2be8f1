//! Learned world model: transition, continuation and reward predictors.

mod loss;
mod predictor;
mod world;

pub use loss::{LossNoise, LossStats, ModelOptimizer};
pub use predictor::{ActionBatch, Arch, Predictor, PredictorTape};
pub use world::{EnvOracle, Rollout, RolloutNoise, StepPrediction, WorldModel};

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::action::{ParamAction, ParamActionSpec};
use crate::error::{Error, Result};
use crate::nn::{sample_batch, AdamConfig, Checkpoint, Mlp, ParamSet};
use crate::rng;

/// Weights of the H-step loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Per-step discount on loss terms.
    pub beta: f64,
    pub transition: f64,
    pub reward: f64,
    pub cont: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta: 0.99,
            transition: 1.0,
            reward: 0.5,
            cont: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub arch: Arch,
    pub hidden: usize,
    /// Latent width between the two sequential stages.
    pub latent_dim: usize,
    /// One reward net for both continuation outcomes.
    pub unify_reward: bool,
    pub loss: LossWeights,
    pub adam: AdamConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Parallel,
            hidden: 64,
            latent_dim: 64,
            unify_reward: false,
            loss: LossWeights::default(),
            adam: AdamConfig::default(),
        }
    }
}

/// Continuation threshold: strictly above one half continues.
#[inline]
pub fn continue_flag(mean: f64) -> f64 {
    if mean > 0.5 {
        1.0
    } else {
        0.0
    }
}

/// One imagined step of a single-trajectory rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaginedStep {
    pub state: Vec<f64>,
    pub reward: f64,
    pub flag: f64,
    pub cont_mean: f64,
    /// Product of the flags of all earlier steps.
    pub alive: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    config: ModelConfig,
    spec: ParamActionSpec,
    state_dim: usize,
    pub transition: Predictor,
    /// Input `s'`, scalar output.
    pub continue_net: Mlp,
    pub reward_alive: Predictor,
    /// Absent when rewards are unified.
    pub reward_terminal: Option<Predictor>,
}

impl DynamicsModel {
    pub fn new(spec: &ParamActionSpec, state_dim: usize, config: ModelConfig, seed: u64) -> Self {
        let key = rng::derive(seed, rng::labels::INIT);
        let (h, l, arch) = (config.hidden, config.latent_dim, config.arch);
        let transition = Predictor::new(
            arch,
            spec,
            state_dim,
            state_dim,
            h,
            l,
            &mut rng::stream(key, 0),
        );
        let continue_net = Mlp::new(state_dim, h, 1, &mut rng::stream(key, 1));
        let reward_alive = Predictor::new(arch, spec, state_dim, 1, h, l, &mut rng::stream(key, 2));
        let reward_terminal = (!config.unify_reward)
            .then(|| Predictor::new(arch, spec, state_dim, 1, h, l, &mut rng::stream(key, 3)));
        Self {
            config,
            spec: spec.clone(),
            state_dim,
            transition,
            continue_net,
            reward_alive,
            reward_terminal,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn spec(&self) -> &ParamActionSpec {
        &self.spec
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    /// Same shapes, all parameters zero; used as a gradient container.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            spec: self.spec.clone(),
            state_dim: self.state_dim,
            transition: self.transition.zeros_like(),
            continue_net: self.continue_net.zeros_like(),
            reward_alive: self.reward_alive.zeros_like(),
            reward_terminal: self.reward_terminal.as_ref().map(Predictor::zeros_like),
        }
    }

    /// Reward net used for continuation flag `flag`.
    pub fn reward_net(&self, flag: f64) -> &Predictor {
        match (&self.reward_terminal, flag > 0.5) {
            (Some(t), false) => t,
            _ => &self.reward_alive,
        }
    }

    /// Every network, in a fixed order, as independent parameter sets.
    pub fn networks(&self) -> Vec<(&'static str, &dyn ParamSet)> {
        let mut v: Vec<(&'static str, &dyn ParamSet)> = vec![
            ("transition", &self.transition),
            ("continue", &self.continue_net),
            ("reward_alive", &self.reward_alive),
        ];
        if let Some(t) = &self.reward_terminal {
            v.push(("reward_terminal", t));
        }
        v
    }

    pub fn networks_mut(&mut self) -> Vec<(&'static str, &mut dyn ParamSet)> {
        let mut v: Vec<(&'static str, &mut dyn ParamSet)> = vec![
            ("transition", &mut self.transition),
            ("continue", &mut self.continue_net),
            ("reward_alive", &mut self.reward_alive),
        ];
        if let Some(t) = &mut self.reward_terminal {
            v.push(("reward_terminal", t));
        }
        v
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim {
            return Err(Error::ShapeMismatch(format!(
                "state width {} but model expects {}",
                s.len(),
                self.state_dim
            )));
        }
        Ok(())
    }

    fn row(v: &[f64]) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((1, v.len()), v).expect("row view")
    }

    /// Samples `s'` for one state and action.
    pub fn predict_transition(
        &self,
        s: &[f64],
        a: &ParamAction,
        noise: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_state(s)?;
        if noise.len() != self.state_dim {
            return Err(Error::ShapeMismatch(format!(
                "noise width {} but state width {}",
                noise.len(),
                self.state_dim
            )));
        }
        let batch = ActionBatch::new(&self.spec, [a])?;
        let (out, _) = self.transition.forward(Self::row(s), &batch)?;
        Ok(sample_batch(&out, Some(Self::row(noise))).row(0).to_vec())
    }

    /// Returns `(flag, raw mean)` for a (predicted) next state.
    pub fn predict_continue(&self, s_next: &[f64]) -> Result<(f64, f64)> {
        self.check_state(s_next)?;
        let mean = self.continue_net.forward_mean(Self::row(s_next))?[[0, 0]];
        Ok((continue_flag(mean), mean))
    }

    /// Samples the reward of `(s, a)` from the net selected by `flag`.
    pub fn predict_reward(&self, s: &[f64], a: &ParamAction, flag: f64, noise: f64) -> Result<f64> {
        self.check_state(s)?;
        let batch = ActionBatch::new(&self.spec, [a])?;
        let (out, _) = self.reward_net(flag).forward(Self::row(s), &batch)?;
        Ok(out.mean[[0, 0]] + out.log_std[[0, 0]].exp() * noise)
    }

    /// Single-trajectory open-loop rollout. With `noise = None` every step
    /// uses the predicted means.
    pub fn imagine_rollout(
        &self,
        s0: &[f64],
        actions: &[ParamAction],
        mut noise: Option<&mut rng::Stream>,
    ) -> Result<Vec<ImaginedStep>> {
        self.check_state(s0)?;
        let mut out = Vec::with_capacity(actions.len());
        let mut s = s0.to_vec();
        let mut alive = 1.0;
        for a in actions {
            let (eps_s, eps_r) = match noise.as_deref_mut() {
                Some(r) => {
                    let e: Vec<f64> = (0..self.state_dim)
                        .map(|_| StandardNormal.sample(r))
                        .collect();
                    (e, StandardNormal.sample(r))
                }
                None => (vec![0.0; self.state_dim], 0.0),
            };
            let next = self.predict_transition(&s, a, &eps_s)?;
            let (flag, cont_mean) = self.predict_continue(&next)?;
            let reward = self.predict_reward(&s, a, flag, eps_r)?;
            if !reward.is_finite() || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("imagined step {}", out.len())));
            }
            out.push(ImaginedStep {
                state: next.clone(),
                reward,
                flag,
                cont_mean,
                alive,
            });
            alive *= flag;
            s = next;
        }
        Ok(out)
    }

    /// Reward predictions for a batch, routed row-wise by `flags`.
    pub(crate) fn routed_reward(
        &self,
        states: ArrayView2<f64>,
        actions: &ActionBatch,
        flags: &Array1<f64>,
        noise: Option<ArrayView2<f64>>,
    ) -> Result<Array1<f64>> {
        let n = states.nrows();
        let mut reward = Array1::zeros(n);
        for (net, rows) in self.reward_groups(flags) {
            if rows.is_empty() {
                continue;
            }
            let s = states.select(Axis(0), &rows);
            let a = actions.select(&rows);
            let (out, _) = net.forward(s.view(), &a)?;
            let eps = noise.map(|nz| nz.select(Axis(0), &rows));
            let r = sample_batch(&out, eps.as_ref().map(|e| e.view()));
            for (j, &row) in rows.iter().enumerate() {
                reward[row] = r[[j, 0]];
            }
        }
        Ok(reward)
    }

    /// Partitions rows by continuation flag into the nets that handle them.
    pub(crate) fn reward_groups(&self, flags: &Array1<f64>) -> Vec<(&Predictor, Vec<usize>)> {
        match &self.reward_terminal {
            None => vec![(&self.reward_alive, (0..flags.len()).collect())],
            Some(term) => {
                let (alive, dead): (Vec<usize>, Vec<usize>) =
                    (0..flags.len()).partition(|&i| flags[i] > 0.5);
                vec![(&self.reward_alive, alive), (term, dead)]
            }
        }
    }

    /// Hash of the action spec and state width the model is bound to.
    pub fn spec_hash(&self) -> String {
        spec_hash(&self.spec, self.state_dim)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("arch", self.config.arch);
        ck.set_meta("spec_hash", self.spec_hash());
        ck.set_meta("state_dim", self.state_dim);
        let dims: Vec<String> = self
            .spec
            .param_dims()
            .iter()
            .map(|d| d.to_string())
            .collect();
        ck.set_meta("param_dims", dims.join(","));
        ck.set_meta("hidden", self.config.hidden);
        ck.set_meta("latent_dim", self.config.latent_dim);
        ck.set_meta("unify_reward", self.config.unify_reward);
        for (name, net) in self.mlps() {
            for ((tensor, (r, c)), data) in crate::nn::TENSOR_NAMES
                .iter()
                .zip(net.tensor_shapes())
                .zip(net.slices())
            {
                ck.push(format!("{name}.{tensor}"), r, c, data);
            }
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let parse_usize = |key: &str| -> Result<usize> {
            ck.meta(key)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad `{key}`")))
        };
        let arch: Arch = ck
            .meta("arch")?
            .parse()
            .map_err(|_| Error::Checkpoint("bad `arch`".into()))?;
        let dims: Vec<usize> = ck
            .meta("param_dims")?
            .split(',')
            .map(|d| {
                d.parse()
                    .map_err(|_| Error::Checkpoint("bad `param_dims`".into()))
            })
            .collect::<Result<_>>()?;
        let spec = ParamActionSpec::new(dims)?;
        let state_dim = parse_usize("state_dim")?;
        if ck.meta("spec_hash")? != spec_hash(&spec, state_dim) {
            return Err(Error::Checkpoint(
                "spec hash does not match the stored spec".into(),
            ));
        }
        let config = ModelConfig {
            arch,
            hidden: parse_usize("hidden")?,
            latent_dim: parse_usize("latent_dim")?,
            unify_reward: ck.meta("unify_reward")? == "true",
            ..ModelConfig::default()
        };
        let mut model = Self::new(&spec, state_dim, config, 0);
        for (name, net) in model.mlps_mut() {
            let shapes = net.tensor_shapes();
            for ((tensor, (r, c)), dst) in crate::nn::TENSOR_NAMES
                .iter()
                .zip(shapes)
                .zip(net.slices_mut())
            {
                dst.copy_from_slice(ck.tensor(&format!("{name}.{tensor}"), r, c)?);
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    /// Loads a checkpoint and checks it against the expected spec.
    pub fn load(path: &Path, spec: &ParamActionSpec, state_dim: usize) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        if ck.meta("spec_hash")? != spec_hash(spec, state_dim) {
            return Err(Error::Checkpoint(
                "checkpoint was trained for a different environment".into(),
            ));
        }
        Self::from_checkpoint(&ck)
    }

    fn mlps(&self) -> Vec<(String, &Mlp)> {
        let mut v = Vec::new();
        let preds = [
            ("transition", Some(&self.transition)),
            ("reward_alive", Some(&self.reward_alive)),
            ("reward_terminal", self.reward_terminal.as_ref()),
        ];
        for (name, p) in preds {
            if let Some(p) = p {
                for (stage, net) in p.nets() {
                    v.push((format!("{name}.{stage}"), net));
                }
            }
        }
        v.push(("continue".to_string(), &self.continue_net));
        v
    }

    fn mlps_mut(&mut self) -> Vec<(String, &mut Mlp)> {
        let mut v = Vec::new();
        let preds = [
            ("transition", Some(&mut self.transition)),
            ("reward_alive", Some(&mut self.reward_alive)),
            ("reward_terminal", self.reward_terminal.as_mut()),
        ];
        for (name, p) in preds {
            if let Some(p) = p {
                for (stage, net) in p.nets_mut() {
                    v.push((format!("{name}.{stage}"), net));
                }
            }
        }
        v.push(("continue".to_string(), &mut self.continue_net));
        v
    }
}

pub fn spec_hash(spec: &ParamActionSpec, state_dim: usize) -> String {
    let digest = Sha256::digest(format!("{}|state_dim={state_dim}", spec.describe()).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl ParamSet for DynamicsModel {
    fn slices(&self) -> Vec<&[f64]> {
        self.networks()
            .into_iter()
            .flat_map(|(_, n)| n.slices())
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.networks_mut()
            .into_iter()
            .flat_map(|(_, n)| n.slices_mut())
            .collect()
    }
}

impl WorldModel for DynamicsModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_spec(&self) -> &ParamActionSpec {
        &self.spec
    }

    fn step(
        &self,
        states: ArrayView2<f64>,
        actions: &ActionBatch,
        state_noise: Option<ArrayView2<f64>>,
        reward_noise: Option<ArrayView2<f64>>,
    ) -> Result<StepPrediction> {
        let (out, _) = self.transition.forward(states, actions)?;
        let next = sample_batch(&out, state_noise);
        let cont_mean = self
            .continue_net
            .forward_mean(next.view())?
            .column(0)
            .to_owned();
        let flag = cont_mean.mapv(continue_flag);
        let reward = self.routed_reward(states, actions, &flag, reward_noise)?;
        Ok(StepPrediction {
            next,
            reward,
            flag,
            cont_mean,
        })
    }
}

/// `[N, d]` batch from a list of equal-length rows.
pub(crate) fn stack_rows<'a, I>(rows: I, width: usize) -> Array2<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let flat: Vec<f64> = rows.into_iter().flat_map(|r| r.iter().copied()).collect();
    let n = flat.len() / width.max(1);
    Array2::from_shape_vec((n, width), flat).expect("rows share a width")
}
