//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::{parse_override, RunConfig};
use crate::error::{Error, Result};
use crate::model::{Arch, DynamicsModel, EnvOracle};
use crate::planner::{act, IterationStats, PlannerMode};
use crate::rng;
use crate::theory::{run_bound_suite, BoundReport};
use crate::trainer::{evaluate, fit_random_data, run_training, EvalRecord};

#[derive(Debug, Parser)]
#[command(
    name = "dlpa",
    version,
    about = "Model-based planning for parameterized-action MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config document (`[section]` headers, `key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set planner.horizon=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelSource {
    /// Trained model checkpoint.
    #[arg(long, conflicts_with = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Use the true environment dynamics as the model.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    HStep,
    MppiVariant,
    Architecture,
    RewardHeads,
    Shooting,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model by planning with it; writes CSV logs and checkpoints.
    Train(Common),
    /// Evaluate a checkpoint (or the oracle) greedily; writes eval.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Run one planning call from a single state; writes plan.csv.
    Plan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
        /// Comma-separated start state; defaults to the env reset state.
        #[arg(long, allow_hyphen_values = true)]
        state: Option<String>,
    },
    /// Run the bound suite; without a source, fits a model on random data.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Train matched configurations along one ablation axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
    },
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut overrides = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        if let Some(seed) = self.seed {
            overrides.push(("seed".into(), seed.to_string()));
        }
        RunConfig::load(self.config.as_deref(), &overrides)
    }

    fn out_dir(&self, default: &str) -> Result<PathBuf> {
        let dir = self
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(default));
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

/// Loads the config, creates the output directory and echoes the resolved
/// config into it.
fn prepare(common: &Common, name: &str) -> Result<(RunConfig, PathBuf)> {
    let cfg = common.resolve()?;
    let dir = common.out_dir(name)?;
    fs::write(dir.join("config.ini"), cfg.to_text())?;
    Ok((cfg, dir))
}

fn load_model(cfg: &RunConfig, path: &Path) -> Result<DynamicsModel> {
    let env = &cfg.train.env;
    DynamicsModel::load(path, &env.action_spec, env.state_dim)
}

fn parse_state(s: &str, dim: usize) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|x| {
            x.trim().parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("state component `{x}` is not a number"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if v.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "state has {} components, env expects {dim}",
            v.len()
        )));
    }
    Ok(v)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Train(common) => {
            let (cfg, dir) = prepare(&common, "train")?;
            let out = run_training(&cfg.train, Some(&dir))?;
            let m = &out.metrics;
            write!(
                stdout,
                "trained {} steps ({} model updates)",
                m.steps.len(),
                m.model_updates
            )?;
            if let Some(e) = m.final_eval() {
                write!(
                    stdout,
                    ", final eval mean {:.3} success {:.2}",
                    e.mean, e.success_rate
                )?;
            }
            writeln!(stdout, "; output in {}", dir.display())?;
        }
        Command::Eval { common, source } => {
            let (cfg, dir) = prepare(&common, "eval")?;
            let t = &cfg.train;
            let seed = rng::derive(t.seed, rng::labels::EVAL);
            let summary = match (&source.checkpoint, source.oracle) {
                (_, true) => evaluate(
                    &EnvOracle::new(t.env.clone()),
                    &t.env,
                    &t.planner,
                    t.eval_episodes,
                    seed,
                )?,
                (Some(p), _) => evaluate(
                    &load_model(&cfg, p)?,
                    &t.env,
                    &t.planner,
                    t.eval_episodes,
                    seed,
                )?,
                (None, false) => {
                    return Err(Error::InvalidArgument(
                        "eval needs --checkpoint or --oracle".into(),
                    ));
                }
            };
            let doc = json!({
                "env": t.env.name(),
                "episodes": t.eval_episodes,
                "seed": t.seed,
                "mean_return": summary.mean,
                "std_return": summary.std,
                "success_rate": summary.success_rate,
                "returns": summary.returns,
            });
            let text = serde_json::to_string_pretty(&doc).expect("plain JSON value");
            fs::write(dir.join("eval.json"), format!("{text}\n"))?;
            writeln!(stdout, "{text}")?;
        }
        Command::Plan {
            common,
            source,
            state,
        } => {
            let (cfg, dir) = prepare(&common, "plan")?;
            let t = &cfg.train;
            let s0 = match state {
                Some(s) => parse_state(&s, t.env.state_dim)?,
                None => {
                    t.env
                        .reset(rng::derive_path(t.seed, &[rng::labels::ENV_RESET, 0]))
                        .observation
                }
            };
            let key = rng::derive_path(t.seed, &[rng::labels::PLAN, 0]);
            let outcome = match (&source.checkpoint, source.oracle) {
                (_, true) => act(&EnvOracle::new(t.env.clone()), &s0, &t.planner, None, key)?,
                (Some(p), _) => act(&load_model(&cfg, p)?, &s0, &t.planner, None, key)?,
                (None, false) => {
                    return Err(Error::InvalidArgument(
                        "plan needs --checkpoint or --oracle".into(),
                    ));
                }
            };
            let mut csv = format!("{}\n", IterationStats::CSV_HEADER);
            for it in &outcome.iterations {
                csv.push_str(&it.csv_row());
                csv.push('\n');
            }
            fs::write(dir.join("plan.csv"), &csv)?;
            write!(stdout, "{csv}")?;
            let a = &outcome.action;
            eprintln!("action k={} z={:?}", a.k, a.z);
        }
        Command::Diagnose { common, source } => {
            let (cfg, dir) = prepare(&common, "diagnose")?;
            let env = &cfg.train.env;
            let suite = &cfg.diagnose.suite;
            let report: BoundReport = match (&source.checkpoint, source.oracle) {
                (_, true) => run_bound_suite(env, &EnvOracle::new(env.clone()), suite)?,
                (Some(p), _) => run_bound_suite(env, &load_model(&cfg, p)?, suite)?,
                (None, false) => {
                    let d = &cfg.diagnose;
                    let (model, _) = fit_random_data(&cfg.train, d.fit_transitions, d.fit_updates)?;
                    model.save(&dir.join("model.ckpt"))?;
                    run_bound_suite(env, &model, suite)?
                }
            };
            fs::write(dir.join("bound_report.txt"), report.to_text())?;
            fs::write(dir.join("bound_report.csv"), report.to_csv())?;
            write!(stdout, "{}", report.to_text())?;
        }
        Command::Ablate { common, axis } => {
            let (cfg, dir) = prepare(&common, "ablate")?;
            let variants = ablation_variants(&cfg, axis);
            let mut curves = Vec::with_capacity(variants.len());
            for (name, v) in &variants {
                let vdir = dir.join(name);
                fs::create_dir_all(&vdir)?;
                fs::write(vdir.join("config.ini"), v.to_text())?;
                let out = run_training(&v.train, Some(&vdir))?;
                let last = out.metrics.final_eval().map_or(f64::NAN, |e| e.mean);
                writeln!(stdout, "{name}: final eval mean {last:.3}")?;
                curves.push(out.metrics.evals);
            }
            let names: Vec<&str> = variants.iter().map(|(n, _)| n.as_str()).collect();
            let csv = aligned_curves(&names, &curves);
            fs::write(dir.join(format!("ablate_{}.csv", axis_name(axis))), csv)?;
        }
    }
    Ok(())
}

pub fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::HStep => "h_step",
        Axis::MppiVariant => "mppi_variant",
        Axis::Architecture => "architecture",
        Axis::RewardHeads => "reward_heads",
        Axis::Shooting => "shooting",
    }
}

/// Matched configurations for `axis`; every variant keeps the base seed.
pub fn ablation_variants(base: &RunConfig, axis: Axis) -> Vec<(String, RunConfig)> {
    let with = |name: &str, f: &dyn Fn(&mut RunConfig)| {
        let mut c = base.clone();
        f(&mut c);
        (name.to_string(), c)
    };
    match axis {
        Axis::HStep => vec![
            with("h_step", &|c| {
                c.train.loss_horizon = c.train.planner.horizon.max(1)
            }),
            with("one_step", &|c| c.train.loss_horizon = 0),
        ],
        Axis::MppiVariant => vec![
            with("conditional", &|c| c.train.planner.shared_gaussian = false),
            with("shared", &|c| c.train.planner.shared_gaussian = true),
        ],
        Axis::Architecture => Arch::ALL
            .iter()
            .map(|&a| with(a.name(), &move |c| c.train.model.arch = a))
            .collect(),
        Axis::RewardHeads => vec![
            with("separate", &|c| c.train.model.unify_reward = false),
            with("unified", &|c| c.train.model.unify_reward = true),
        ],
        Axis::Shooting => vec![
            with("mppi", &|c| c.train.planner.mode = PlannerMode::Mppi),
            with("random_shooting", &|c| {
                c.train.planner.mode = PlannerMode::RandomShooting
            }),
        ],
    }
}

/// `step,<variant>...` with one row per evaluation step seen in any curve.
pub fn aligned_curves(names: &[&str], curves: &[Vec<EvalRecord>]) -> String {
    let mut steps: Vec<usize> = curves.iter().flatten().map(|e| e.step).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut out = format!("step,{}\n", names.join(","));
    for s in steps {
        let cells: Vec<String> = curves
            .iter()
            .map(|c| {
                c.iter()
                    .find(|e| e.step == s)
                    .map_or(String::new(), |e| e.summary.mean.to_string())
            })
            .collect();
        out.push_str(&format!("{s},{}\n", cells.join(",")));
    }
    out
}
