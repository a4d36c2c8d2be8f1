//! Interaction loop: plan, act, store, fit the model, evaluate.

mod replay;

pub use replay::ReplayBuffer;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::action::Transition;
use crate::env::{uniform_action, EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::model::{DynamicsModel, LossNoise, LossStats, ModelConfig, ModelOptimizer, WorldModel};
use crate::planner::{act, IterationStats, PlanDistribution, PlannerConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvSpec,
    pub planner: PlannerConfig,
    pub model: ModelConfig,
    /// Horizon of the model loss; 0 gives the one-step loss.
    pub loss_horizon: usize,
    pub batch_size: usize,
    pub steps_per_update: usize,
    pub replay_capacity: usize,
    pub total_steps: usize,
    /// Uniform random actions before planning starts.
    pub warmup_steps: usize,
    /// Env steps between evaluations; 0 disables evaluation.
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Stop once the mean of the last three evaluations exceeds this.
    pub stop_return: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for `env`, with the environment's plan horizon.
    pub fn for_env(env: EnvSpec) -> Self {
        let horizon = PlannerConfig::horizon_for(env.name());
        // separate reward heads are used where episodes end with a distinct reward
        let unify_reward = matches!(env.kind, EnvKind::Platform);
        Self {
            env,
            planner: PlannerConfig {
                horizon,
                ..PlannerConfig::default()
            },
            model: ModelConfig {
                unify_reward,
                ..ModelConfig::default()
            },
            loss_horizon: horizon,
            batch_size: 128,
            steps_per_update: 1,
            replay_capacity: 1_000_000,
            total_steps: 100_000,
            warmup_steps: 200,
            eval_interval: 1000,
            eval_episodes: 10,
            stop_return: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be positive");
        }
        if self.replay_capacity == 0 {
            return fail("replay_capacity must be positive");
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return fail("eval_episodes must be positive when evaluating");
        }
        if self.model.hidden == 0 || self.model.latent_dim == 0 {
            return fail("network widths must be positive");
        }
        if self.model.adam.lr.is_nan() || self.model.adam.lr <= 0.0 {
            return fail("learning rate must be positive");
        }
        Ok(())
    }
}

/// One env step of the training run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub episode: usize,
    /// Set on the step that ends an episode.
    pub episode_return: Option<f64>,
    pub loss: Option<LossStats>,
    /// First and last planner iteration of this step's planning call.
    pub plan_first: Option<IterationStats>,
    pub plan_last: Option<IterationStats>,
    pub wall_ms: f64,
}

impl StepRecord {
    pub const CSV_HEADER: &'static str =
        "step,episode,episode_return,loss_total,loss_T,loss_R,loss_c,plan_entropy,plan_sigma_mean,wall_ms";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{:.3}",
            self.step,
            self.episode,
            opt(self.episode_return),
            opt(self.loss.map(|l| l.total)),
            opt(self.loss.map(|l| l.transition)),
            opt(self.loss.map(|l| l.reward)),
            opt(self.loss.map(|l| l.cont)),
            opt(self.plan_last.map(|p| p.entropy)),
            opt(self.plan_last.map(|p| p.sigma_mean)),
            self.wall_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub mean: f64,
    pub std: f64,
    pub success_rate: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// Env steps taken before this evaluation.
    pub step: usize,
    pub summary: EvalSummary,
}

impl EvalRecord {
    pub const CSV_HEADER: &'static str = "step,mean_return,std_return,success_rate";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.step, self.summary.mean, self.summary.std, self.summary.success_rate
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
    pub model_updates: usize,
    pub transitions_stored: usize,
    pub planner_calls: usize,
}

impl Metrics {
    /// Mean of the last three evaluation means.
    pub fn smoothed_eval(&self) -> Option<f64> {
        let tail: Vec<f64> = self
            .evals
            .iter()
            .rev()
            .take(3)
            .map(|e| e.summary.mean)
            .collect();
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    pub fn final_eval(&self) -> Option<&EvalSummary> {
        self.evals.last().map(|e| &e.summary)
    }
}

/// Incremental CSV output under a run directory.
struct Sink {
    steps: BufWriter<File>,
    evals: BufWriter<File>,
    plans: BufWriter<File>,
    dir: PathBuf,
}

impl Sink {
    fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut steps = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(steps, "{}", StepRecord::CSV_HEADER)?;
        let mut evals = BufWriter::new(File::create(dir.join("eval.csv"))?);
        writeln!(evals, "{}", EvalRecord::CSV_HEADER)?;
        let mut plans = BufWriter::new(File::create(dir.join("plan.csv"))?);
        writeln!(plans, "step,{}", IterationStats::CSV_HEADER)?;
        Ok(Self {
            steps,
            evals,
            plans,
            dir: dir.to_path_buf(),
        })
    }

    fn flush(&mut self) -> Result<()> {
        self.steps.flush()?;
        self.evals.flush()?;
        self.plans.flush()?;
        Ok(())
    }
}

/// Runs full episodes planning greedily with `world`; nothing is stored.
pub fn evaluate<W: WorldModel + ?Sized>(
    world: &W,
    env: &EnvSpec,
    planner: &PlannerConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::InvalidArgument(
            "evaluate needs at least one episode".into(),
        ));
    }
    let cfg = PlannerConfig {
        greedy: true,
        ..planner.clone()
    };
    let mut returns = Vec::with_capacity(episodes);
    let mut successes = 0usize;
    for e in 0..episodes {
        let ep_key = rng::derive_path(seed, &[rng::labels::EVAL, e as u64]);
        let mut state = env.reset(ep_key);
        let mut total = 0.0;
        let mut prev: Option<PlanDistribution> = None;
        while !state.done {
            let key = rng::derive(ep_key, state.step_count as u64);
            let out = act(world, &state.observation, &cfg, prev.as_ref(), key)?;
            let (next, info) = env.step(&state, &out.action)?;
            total += info.reward;
            successes += usize::from(info.success);
            prev = Some(out.distribution);
            state = next;
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(EvalSummary {
        mean,
        std,
        success_rate: successes as f64 / n,
        returns,
    })
}

/// Result of a training run: the trained model and its metrics.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DynamicsModel,
    pub metrics: Metrics,
}

/// Plans with the model being learned for `total_steps` env steps,
/// resetting episodes as they end. With `out`, CSVs and checkpoints are
/// written there as the run progresses.
pub fn run_training(cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut sink = out.map(Sink::open).transpose()?;
    let mut model = DynamicsModel::new(
        &cfg.env.action_spec,
        cfg.env.state_dim,
        cfg.model.clone(),
        cfg.seed,
    );
    let mut metrics = Metrics::default();
    let result = train_loop(cfg, &mut model, &mut metrics, sink.as_mut());
    if let Some(s) = sink.as_mut() {
        s.flush()?;
    }
    result?;
    Ok(TrainOutcome { model, metrics })
}

/// One model update on a batch drawn with counter `index`.
fn update(
    cfg: &TrainConfig,
    model: &mut DynamicsModel,
    opt: &mut ModelOptimizer,
    buffer: &ReplayBuffer,
    index: u64,
) -> Result<LossStats> {
    let mut br = rng::stream(rng::derive(cfg.seed, rng::labels::TRAIN_BATCH), index);
    let segs = buffer.sample_segments(cfg.batch_size, &mut br)?;
    let mut nr = rng::stream(rng::derive(cfg.seed, rng::labels::TRAIN_NOISE), index);
    let mut noise = LossNoise::zeros(segs.len(), cfg.env.state_dim, cfg.loss_horizon + 1);
    for row in 0..segs.len() {
        noise.fill_row(row, &mut nr);
    }
    model.train_batch(opt, &segs, Some(&noise))
}

/// Fits a fresh model offline: `transitions` uniform-random env steps, then
/// `updates` model updates. Returns the model and the loss of every update.
pub fn fit_random_data(
    cfg: &TrainConfig,
    transitions: usize,
    updates: usize,
) -> Result<(DynamicsModel, Vec<LossStats>)> {
    cfg.validate()?;
    let env = &cfg.env;
    let mut model =
        DynamicsModel::new(&env.action_spec, env.state_dim, cfg.model.clone(), cfg.seed);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.loss_horizon)?;
    let mut episode = 0u64;
    let reset_key = |e: u64| rng::derive_path(cfg.seed, &[rng::labels::ENV_RESET, e]);
    let mut state = env.reset(reset_key(episode));
    for step in 0..transitions {
        let mut r = rng::stream(rng::derive(cfg.seed, rng::labels::WARMUP), step as u64);
        let action = uniform_action(&env.action_spec, &mut r);
        let (next, info) = env.step(&state, &action)?;
        let done = next.done;
        buffer.push(
            Transition {
                s: state.observation,
                action,
                r: info.reward,
                s_next: next.observation.clone(),
                c: info.cont,
            },
            done,
        );
        state = if done {
            episode += 1;
            env.reset(reset_key(episode))
        } else {
            next
        };
    }
    let mut opt = ModelOptimizer::new(&model);
    let losses = (0..updates as u64)
        .map(|i| update(cfg, &mut model, &mut opt, &buffer, i))
        .collect::<Result<Vec<_>>>()?;
    Ok((model, losses))
}

fn train_loop(
    cfg: &TrainConfig,
    model: &mut DynamicsModel,
    metrics: &mut Metrics,
    mut sink: Option<&mut Sink>,
) -> Result<()> {
    let env = &cfg.env;
    let seed = cfg.seed;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.loss_horizon)?;
    let mut opt = ModelOptimizer::new(model);
    let mut episode = 0usize;
    let reset_key = |e: usize| rng::derive_path(seed, &[rng::labels::ENV_RESET, e as u64]);
    let mut state = env.reset(reset_key(episode));
    let mut episode_return = 0.0;
    let mut prev: Option<PlanDistribution> = None;
    let mut updates = 0u64;

    for step in 0..cfg.total_steps {
        let t0 = Instant::now();
        let (action, plan) = if step < cfg.warmup_steps {
            let mut r = rng::stream(rng::derive(seed, rng::labels::WARMUP), step as u64);
            (uniform_action(&env.action_spec, &mut r), None)
        } else {
            let key = rng::derive_path(seed, &[rng::labels::PLAN, step as u64]);
            let out = act(
                &*model,
                &state.observation,
                &cfg.planner,
                prev.as_ref(),
                key,
            )?;
            metrics.planner_calls += 1;
            let its = out.iterations.clone();
            prev = Some(out.distribution);
            (out.action, Some(its))
        };
        let (next, info) = env.step(&state, &action)?;
        episode_return += info.reward;
        buffer.push(
            Transition {
                s: state.observation.clone(),
                action,
                r: info.reward,
                s_next: next.observation.clone(),
                c: info.cont,
            },
            next.done,
        );
        metrics.transitions_stored += 1;

        let mut loss = None;
        if buffer.num_segments() > 0 {
            for _ in 0..cfg.steps_per_update {
                loss = Some(update(cfg, model, &mut opt, &buffer, updates)?);
                updates += 1;
                metrics.model_updates += 1;
            }
        }

        let ended = next.done;
        let record = StepRecord {
            step,
            episode,
            episode_return: ended.then_some(episode_return),
            loss,
            plan_first: plan.as_ref().and_then(|p| p.first().copied()),
            plan_last: plan.as_ref().and_then(|p| p.last().copied()),
            wall_ms: t0.elapsed().as_secs_f64() * 1000.0,
        };
        if let Some(s) = sink.as_deref_mut() {
            writeln!(s.steps, "{}", record.csv_row())?;
            for it in plan.iter().flatten() {
                writeln!(s.plans, "{step},{}", it.csv_row())?;
            }
        }
        metrics.steps.push(record);

        if ended {
            episode += 1;
            episode_return = 0.0;
            prev = None;
            state = env.reset(reset_key(episode));
        } else {
            state = next;
        }

        if cfg.eval_interval > 0 && (step + 1) % cfg.eval_interval == 0 {
            let eval_seed = rng::derive(seed, (step + 1) as u64);
            let summary = evaluate(&*model, env, &cfg.planner, cfg.eval_episodes, eval_seed)?;
            let rec = EvalRecord {
                step: step + 1,
                summary,
            };
            if let Some(s) = sink.as_deref_mut() {
                writeln!(s.evals, "{}", rec.csv_row())?;
                s.flush()?;
                model.save(&s.dir.join("model.ckpt"))?;
            }
            metrics.evals.push(rec);
            if let (Some(target), Some(smooth)) = (cfg.stop_return, metrics.smoothed_eval()) {
                if smooth > target {
                    break;
                }
            }
        }
    }
    if let Some(s) = sink {
        model.save(&s.dir.join("model.ckpt"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EnvOracle;

    fn tiny(env: EnvSpec, steps: usize) -> TrainConfig {
        let mut cfg = TrainConfig::for_env(env);
        cfg.total_steps = steps;
        cfg.warmup_steps = 20;
        cfg.batch_size = 8;
        cfg.eval_interval = 30;
        cfg.eval_episodes = 1;
        cfg.model.hidden = 8;
        cfg.model.latent_dim = 4;
        cfg.planner.population = 16;
        cfg.planner.elites = 4;
        cfg.planner.iterations = 2;
        cfg
    }

    #[test]
    fn zero_steps_is_empty() {
        let cfg = tiny(EnvSpec::platform(), 0);
        let dir = tempfile::tempdir().unwrap();
        let out = run_training(&cfg, Some(dir.path())).unwrap();
        assert!(out.metrics.steps.is_empty());
        assert_eq!(out.metrics.model_updates, 0);
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn accounting_and_determinism() {
        let cfg = tiny(EnvSpec::catch_point(), 60);
        let a = run_training(&cfg, None).unwrap();
        let b = run_training(&cfg, None).unwrap();
        let m = &a.metrics;
        assert_eq!(m.transitions_stored, 60);
        assert_eq!(m.steps.len(), 60);
        assert_eq!(m.planner_calls, 40);
        assert_eq!(m.evals.len(), 2);
        let strip = |m: &Metrics| {
            m.steps
                .iter()
                .map(|s| StepRecord {
                    wall_ms: 0.0,
                    ..s.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a.metrics), strip(&b.metrics));
        assert_eq!(a.metrics.evals, b.metrics.evals);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn single_episode_eval_has_zero_std() {
        let env = EnvSpec::platform();
        let planner = PlannerConfig {
            population: 16,
            elites: 4,
            iterations: 2,
            horizon: 3,
            ..PlannerConfig::default()
        };
        let s = evaluate(&EnvOracle::new(env.clone()), &env, &planner, 1, 3).unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.returns.len(), 1);
    }
}
