//! Sampling-based planning over hybrid action sequences.

mod distribution;

pub use distribution::{
    elite_weights, sample_sequences, select_elites, update_distribution, PlanDistribution,
    StepDist, UpdateRule, SIGMA_FLOOR, SIGMA_INIT,
};

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;

use crate::action::ParamAction;
use crate::error::{Error, Result};
use crate::model::{ActionBatch, RolloutNoise, WorldModel};
use crate::rng;

/// Sequences scored per work item. Fixed so results do not depend on the
/// number of worker threads.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerMode {
    Mppi,
    RandomShooting,
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlannerMode::Mppi => "mppi",
            PlannerMode::RandomShooting => "random_shooting",
        })
    }
}

impl FromStr for PlannerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mppi" => Ok(PlannerMode::Mppi),
            "random_shooting" => Ok(PlannerMode::RandomShooting),
            other => Err(Error::Config(format!(
                "unknown planner mode `{other}` (mppi, random_shooting)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Sequences sampled per iteration (N).
    pub population: usize,
    /// Elites kept per iteration (n).
    pub elites: usize,
    /// Refit rounds (E).
    pub iterations: usize,
    /// Plan horizon H; sequences hold `H + 1` actions.
    pub horizon: usize,
    /// Softmax temperature on returns.
    pub temperature: f64,
    /// Weight kept on the previous distribution.
    pub momentum: f64,
    pub gamma: f64,
    pub mode: PlannerMode,
    /// One Gaussian per step shared by all discrete actions.
    pub shared_gaussian: bool,
    /// Mask returns by the instantaneous flag instead of the running product.
    pub literal_eq4: bool,
    /// Normalize Gaussian refits over all elites.
    pub literal_eq6: bool,
    /// Execute the mode of the final distribution instead of a sample.
    pub greedy: bool,
    /// Start from the previous final distribution shifted by one step.
    pub warm_start: bool,
    /// Sample model noise during imagination (otherwise use means).
    pub stochastic_model: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            population: 1000,
            elites: 400,
            iterations: 6,
            horizon: 5,
            temperature: 0.5,
            momentum: 0.1,
            gamma: 0.99,
            mode: PlannerMode::Mppi,
            shared_gaussian: false,
            literal_eq4: false,
            literal_eq6: false,
            greedy: false,
            warm_start: false,
            stochastic_model: true,
        }
    }
}

impl PlannerConfig {
    /// Default plan horizon for a benchmark environment.
    pub fn horizon_for(env_name: &str) -> usize {
        match env_name {
            "platform" => 10,
            _ => 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.population == 0 {
            return fail("population must be at least 1");
        }
        if self.elites == 0 || self.elites > self.population {
            return fail("elites must be in 1..=population");
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail("temperature must be positive");
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return fail("momentum must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must be in [0, 1]");
        }
        Ok(())
    }

    pub fn update_rule(&self) -> UpdateRule {
        UpdateRule {
            temperature: self.temperature,
            momentum: self.momentum,
            literal_eq6: self.literal_eq6,
        }
    }

    pub fn init_distribution(&self, spec: &crate::action::ParamActionSpec) -> PlanDistribution {
        if self.shared_gaussian {
            PlanDistribution::shared(spec, self.horizon + 1)
        } else {
            PlanDistribution::new(spec, self.horizon + 1)
        }
    }
}

/// Search statistics after one refit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    /// 1-based.
    pub iteration: usize,
    pub best_return: f64,
    pub mean_return: f64,
    /// Mean categorical entropy of the refit distribution.
    pub entropy: f64,
    /// Mean sigma of the refit distribution.
    pub sigma_mean: f64,
}

impl IterationStats {
    pub const CSV_HEADER: &'static str = "iteration,best_return,mean_return,entropy,sigma_mean";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.best_return, self.mean_return, self.entropy, self.sigma_mean
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub action: ParamAction,
    pub distribution: PlanDistribution,
    pub iterations: Vec<IterationStats>,
}

/// Discounted imagined return of each sequence from `start`.
///
/// `J = sum_t gamma^t mask_t r_t`, where `mask_t` is the product of the
/// continuation flags before `t` (or the flag at `t` with `literal_eq4`).
/// Non-finite returns become negative infinity.
pub fn score_trajectories<W: WorldModel + ?Sized>(
    world: &W,
    start: &[f64],
    sequences: &[Vec<ParamAction>],
    cfg: &PlannerConfig,
    noise_key: Option<u64>,
) -> Result<Vec<f64>> {
    if start.len() != world.state_dim() {
        return Err(Error::ShapeMismatch(format!(
            "start state width {} but model expects {}",
            start.len(),
            world.state_dim()
        )));
    }
    let chunks: Vec<Result<Vec<f64>>> = sequences
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| score_chunk(world, start, chunk, c * CHUNK, cfg, noise_key))
        .collect();
    let mut out = Vec::with_capacity(sequences.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

fn score_chunk<W: WorldModel + ?Sized>(
    world: &W,
    start: &[f64],
    chunk: &[Vec<ParamAction>],
    offset: usize,
    cfg: &PlannerConfig,
    noise_key: Option<u64>,
) -> Result<Vec<f64>> {
    let n = chunk.len();
    let steps = chunk.first().map_or(0, Vec::len);
    if chunk.iter().any(|s| s.len() != steps) {
        return Err(Error::ShapeMismatch("sequences differ in length".into()));
    }
    let d = world.state_dim();
    let s0 = Array2::from_shape_fn((n, d), |(_, j)| start[j]);
    let actions = (0..steps)
        .map(|t| ActionBatch::new(world.action_spec(), chunk.iter().map(|s| &s[t])))
        .collect::<Result<Vec<_>>>()?;
    let noise = noise_key.map(|key| {
        let mut nz = RolloutNoise::zeros(n, d, steps);
        for i in 0..n {
            nz.fill_row(i, &mut rng::stream(key, (offset + i) as u64));
        }
        nz
    });
    let roll = world.imagine(s0.view(), &actions, noise.as_ref())?;
    Ok((0..n)
        .map(|i| {
            let mut alive = 1.0;
            let mut discount = 1.0;
            let mut j = 0.0;
            for t in 0..steps {
                let flag = roll.flags[[i, t]];
                let mask = if cfg.literal_eq4 { flag } else { alive };
                j += discount * mask * roll.rewards[[i, t]];
                alive *= flag;
                discount *= cfg.gamma;
            }
            if j.is_finite() {
                j
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect())
}

/// Key layout under a planning call's `key`.
mod keys {
    pub const SAMPLE: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const FINAL: u64 = 3;
}

fn summarize(iteration: usize, returns: &[f64], dist: &PlanDistribution) -> IterationStats {
    let finite: Vec<f64> = returns.iter().copied().filter(|j| j.is_finite()).collect();
    let best = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    IterationStats {
        iteration,
        best_return: best,
        mean_return: mean,
        entropy: dist.mean_entropy(),
        sigma_mean: dist.mean_sigma(),
    }
}

/// Iterated refit of `init` (or a fresh distribution) towards elite
/// sequences; returns the first action of a sequence drawn from the result.
pub fn plan<W: WorldModel + ?Sized>(
    world: &W,
    state: &[f64],
    cfg: &PlannerConfig,
    init: Option<PlanDistribution>,
    key: u64,
) -> Result<PlanOutcome> {
    cfg.validate()?;
    let mut dist = match init {
        Some(d) if d.len() == cfg.horizon + 1 => d,
        Some(_) => {
            return Err(Error::InvalidArgument(
                "initial distribution has the wrong horizon".into(),
            ))
        }
        None => cfg.init_distribution(world.action_spec()),
    };
    let rule = cfg.update_rule();
    let mut stats = Vec::with_capacity(cfg.iterations);
    for j in 0..cfg.iterations {
        let it_key = rng::derive(key, j as u64);
        let seqs = sample_sequences(&dist, cfg.population, rng::derive(it_key, keys::SAMPLE));
        let noise = cfg
            .stochastic_model
            .then(|| rng::derive(it_key, keys::NOISE));
        let returns = score_trajectories(world, state, &seqs, cfg, noise)?;
        let elites = select_elites(&returns, cfg.elites);
        dist = update_distribution(&dist, &seqs, &elites, &returns, &rule)?;
        stats.push(summarize(j + 1, &returns, &dist));
    }
    let action = if cfg.greedy {
        dist.mode_step(0)
    } else {
        let mut r = rng::stream(rng::derive(key, keys::FINAL), 0);
        dist.sample_step(0, &mut r)
    };
    Ok(PlanOutcome {
        action,
        distribution: dist,
        iterations: stats,
    })
}

/// Scores `population` sequences from the initial distribution once and
/// returns the first action of the best one.
pub fn random_shooting_plan<W: WorldModel + ?Sized>(
    world: &W,
    state: &[f64],
    cfg: &PlannerConfig,
    key: u64,
) -> Result<PlanOutcome> {
    cfg.validate()?;
    let dist = cfg.init_distribution(world.action_spec());
    let it_key = rng::derive(key, 0);
    let seqs = sample_sequences(&dist, cfg.population, rng::derive(it_key, keys::SAMPLE));
    let noise = cfg
        .stochastic_model
        .then(|| rng::derive(it_key, keys::NOISE));
    let returns = score_trajectories(world, state, &seqs, cfg, noise)?;
    let best = *select_elites(&returns, 1)
        .first()
        .ok_or(Error::EmptyElites)?;
    let stats = summarize(1, &returns, &dist);
    Ok(PlanOutcome {
        action: seqs[best][0].clone(),
        distribution: dist,
        iterations: vec![stats],
    })
}

/// Dispatches on `cfg.mode`.
pub fn act<W: WorldModel + ?Sized>(
    world: &W,
    state: &[f64],
    cfg: &PlannerConfig,
    previous: Option<&PlanDistribution>,
    key: u64,
) -> Result<PlanOutcome> {
    match cfg.mode {
        PlannerMode::RandomShooting => random_shooting_plan(world, state, cfg, key),
        PlannerMode::Mppi => {
            let init = if cfg.warm_start {
                previous.map(PlanDistribution::shifted)
            } else {
                None
            };
            plan(world, state, cfg, init, key)
        }
    }
}
