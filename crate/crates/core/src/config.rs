//! Run configuration: a sectioned `key = value` document.
//!
//! ```text
//! [run]
//! env = hard_move
//! actuators = 4
//!
//! [planner]
//! horizon = 8
//! ```
//!
//! Keys are unique across sections, so overrides may be written either as
//! `section.key=value` or as a bare `key=value`. Every key is checked against
//! the schema below; unknown keys, malformed values and violated constraints
//! are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::env::{EnvSpec, LinearPamdp};
use crate::error::{Error, Result};
use crate::model::Arch;
use crate::planner::PlannerMode;
use crate::theory::BoundSuiteConfig;
use crate::trainer::TrainConfig;

/// `(section, key)` for every accepted key, in echo order.
pub const SCHEMA: &[(&str, &str)] = &[
    ("run", "env"),
    ("run", "actuators"),
    ("run", "linear_dim"),
    ("run", "linear_contraction"),
    ("run", "seed"),
    ("run", "total_steps"),
    ("run", "warmup_steps"),
    ("run", "eval_interval"),
    ("run", "eval_episodes"),
    ("run", "stop_return"),
    ("planner", "mode"),
    ("planner", "population"),
    ("planner", "elites"),
    ("planner", "iterations"),
    ("planner", "horizon"),
    ("planner", "temperature"),
    ("planner", "momentum"),
    ("planner", "gamma"),
    ("planner", "shared_gaussian"),
    ("planner", "literal_eq4"),
    ("planner", "literal_eq6"),
    ("planner", "greedy"),
    ("planner", "warm_start"),
    ("planner", "stochastic_model"),
    ("model", "arch"),
    ("model", "hidden"),
    ("model", "latent_dim"),
    ("model", "unify_reward"),
    ("model", "lr"),
    ("model", "beta"),
    ("model", "transition_coef"),
    ("model", "reward_coef"),
    ("model", "termination_coef"),
    ("train", "loss_horizon"),
    ("train", "batch_size"),
    ("train", "steps_per_update"),
    ("train", "replay_capacity"),
    ("diagnose", "lipschitz_samples"),
    ("diagnose", "rollouts"),
    ("diagnose", "regret_starts"),
    ("diagnose", "regret_constant"),
    ("diagnose", "lemma_delta"),
    ("diagnose", "fit_transitions"),
    ("diagnose", "fit_updates"),
];

/// Settings of the `diagnose` command.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseConfig {
    pub suite: BoundSuiteConfig,
    /// Random-action transitions used when no checkpoint is given.
    pub fit_transitions: usize,
    pub fit_updates: usize,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            suite: BoundSuiteConfig::default(),
            fit_transitions: 5000,
            fit_updates: 2000,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env_name: String,
    pub actuators: usize,
    pub linear_dim: usize,
    pub linear_contraction: f64,
    pub train: TrainConfig,
    pub diagnose: DiagnoseConfig,
}

fn lookup(key: &str) -> Result<(&'static str, &'static str)> {
    let (section, name) = match key.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, key),
    };
    SCHEMA
        .iter()
        .find(|(s, k)| *k == name && section.is_none_or(|want| want == *s))
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))
}

fn parse<T: std::str::FromStr>(key: &str, v: &str, what: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}` expects {what}, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}` expects a boolean, got `{v}`"
        ))),
    }
}

/// Splits a document into `(key, value)` assignments, keys qualified by
/// their section.
pub fn parse_document(text: &str) -> Result<Vec<(String, String)>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: malformed section header", no + 1)))?
                .trim();
            if !SCHEMA.iter().any(|(s, _)| *s == name) {
                return Err(Error::Config(format!(
                    "line {}: unknown section `{name}`",
                    no + 1
                )));
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
        let k = k.trim();
        let key = match &section {
            Some(s) if !k.contains('.') => format!("{s}.{k}"),
            _ => k.to_string(),
        };
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not `key=value`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    /// Defaults for `env_name`.
    pub fn defaults(env_name: &str) -> Result<Self> {
        Self::resolve(&[("env".to_string(), env_name.to_string())])
    }

    /// Reads `path` (if any), then applies `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = match path {
            Some(p) => parse_document(&std::fs::read_to_string(p)?)?,
            None => Vec::new(),
        };
        pairs.extend(overrides.iter().cloned());
        Self::resolve(&pairs)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::resolve(&parse_document(text)?)
    }

    /// Applies assignments on top of the defaults of the selected env.
    /// Later assignments win.
    pub fn resolve(pairs: &[(String, String)]) -> Result<Self> {
        let mut resolved = Vec::with_capacity(pairs.len());
        for (k, v) in pairs {
            resolved.push((lookup(k)?, k.as_str(), v.as_str()));
        }
        let last = |name: &str| {
            resolved
                .iter()
                .rev()
                .find(|((_, k), _, _)| *k == name)
                .map(|r| r.2)
        };

        let env_name = last("env").unwrap_or("platform").to_string();
        let actuators = match last("actuators") {
            Some(v) => parse("actuators", v, "an integer")?,
            None => 4,
        };
        let linear_dim = match last("linear_dim") {
            Some(v) => parse("linear_dim", v, "an integer")?,
            None => 3,
        };
        let linear_contraction = match last("linear_contraction") {
            Some(v) => parse("linear_contraction", v, "a number")?,
            None => 0.5,
        };
        let seed: u64 = match last("seed") {
            Some(v) => parse("seed", v, "an unsigned integer")?,
            None => 0,
        };
        let env = build_env(&env_name, actuators, linear_dim, linear_contraction, seed)?;
        let mut cfg = Self {
            env_name,
            actuators,
            linear_dim,
            linear_contraction,
            train: TrainConfig::for_env(env),
            diagnose: DiagnoseConfig::default(),
        };
        cfg.train.seed = seed;
        let mut loss_horizon_set = false;
        for ((_, key), raw, v) in &resolved {
            loss_horizon_set |= *key == "loss_horizon";
            cfg.set(key, raw, v)?;
        }
        if !loss_horizon_set {
            cfg.train.loss_horizon = cfg.train.planner.horizon;
        }
        cfg.diagnose.suite.seed = seed;
        cfg.diagnose.suite.horizon = cfg.train.planner.horizon;
        cfg.diagnose.suite.planner = cfg.train.planner.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, raw: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let p = &mut t.planner;
        let m = &mut t.model;
        let d = &mut self.diagnose;
        let int = |v: &str| parse::<usize>(raw, v, "a nonnegative integer");
        let num = |v: &str| parse::<f64>(raw, v, "a number");
        let flag = |v: &str| parse_bool(raw, v);
        match key {
            "env" | "actuators" | "linear_dim" | "linear_contraction" | "seed" => {}
            "total_steps" => t.total_steps = int(v)?,
            "warmup_steps" => t.warmup_steps = int(v)?,
            "eval_interval" => t.eval_interval = int(v)?,
            "eval_episodes" => t.eval_episodes = int(v)?,
            "stop_return" => {
                t.stop_return = match v {
                    "none" | "" => None,
                    _ => Some(num(v)?),
                }
            }
            "mode" => p.mode = v.parse::<PlannerMode>()?,
            "population" => p.population = int(v)?,
            "elites" => p.elites = int(v)?,
            "iterations" => p.iterations = int(v)?,
            "horizon" => p.horizon = int(v)?,
            "temperature" => p.temperature = num(v)?,
            "momentum" => p.momentum = num(v)?,
            "gamma" => p.gamma = num(v)?,
            "shared_gaussian" => p.shared_gaussian = flag(v)?,
            "literal_eq4" => p.literal_eq4 = flag(v)?,
            "literal_eq6" => p.literal_eq6 = flag(v)?,
            "greedy" => p.greedy = flag(v)?,
            "warm_start" => p.warm_start = flag(v)?,
            "stochastic_model" => p.stochastic_model = flag(v)?,
            "arch" => m.arch = v.parse::<Arch>()?,
            "hidden" => m.hidden = int(v)?,
            "latent_dim" => m.latent_dim = int(v)?,
            "unify_reward" => m.unify_reward = flag(v)?,
            "lr" => m.adam.lr = num(v)?,
            "beta" => m.loss.beta = num(v)?,
            "transition_coef" => m.loss.transition = num(v)?,
            "reward_coef" => m.loss.reward = num(v)?,
            "termination_coef" => m.loss.cont = num(v)?,
            "loss_horizon" => t.loss_horizon = int(v)?,
            "batch_size" => t.batch_size = int(v)?,
            "steps_per_update" => t.steps_per_update = int(v)?,
            "replay_capacity" => t.replay_capacity = int(v)?,
            "lipschitz_samples" => d.suite.lipschitz_samples = int(v)?,
            "rollouts" => d.suite.rollouts = int(v)?,
            "regret_starts" => d.suite.regret_starts = int(v)?,
            "regret_constant" => d.suite.regret_constant = num(v)?,
            "lemma_delta" => d.suite.lemma_delta = num(v)?,
            "fit_transitions" => d.fit_transitions = int(v)?,
            "fit_updates" => d.fit_updates = int(v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.train.planner;
        if p.elites > p.population {
            return Err(Error::Config(format!(
                "elites ({}) must not exceed population ({})",
                p.elites, p.population
            )));
        }
        self.train.validate()?;
        let d = &self.diagnose;
        if d.suite.lipschitz_samples < 2 || d.suite.rollouts == 0 {
            return Err(Error::Config(
                "diagnose needs lipschitz_samples >= 2 and rollouts >= 1".into(),
            ));
        }
        if !(d.suite.lemma_delta > 0.0 && d.suite.lemma_delta < 1.0) {
            return Err(Error::Config("lemma_delta must be in (0, 1)".into()));
        }
        if d.suite.regret_constant.is_nan() || d.suite.regret_constant <= 0.0 {
            return Err(Error::Config("regret_constant must be positive".into()));
        }
        if !(self.train.model.loss.beta > 0.0 && self.train.model.loss.beta <= 1.0) {
            return Err(Error::Config("beta must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Resolved document with every key; parsing it yields `self` again.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (s, k) in SCHEMA {
            if *s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                writeln!(out, "[{s}]").unwrap();
                section = s;
            }
            writeln!(out, "{k} = {}", self.value(k)).unwrap();
        }
        out
    }

    fn value(&self, key: &str) -> String {
        let t = &self.train;
        let p = &t.planner;
        let m = &t.model;
        let d = &self.diagnose;
        match key {
            "env" => self.env_name.clone(),
            "actuators" => self.actuators.to_string(),
            "linear_dim" => self.linear_dim.to_string(),
            "linear_contraction" => self.linear_contraction.to_string(),
            "seed" => t.seed.to_string(),
            "total_steps" => t.total_steps.to_string(),
            "warmup_steps" => t.warmup_steps.to_string(),
            "eval_interval" => t.eval_interval.to_string(),
            "eval_episodes" => t.eval_episodes.to_string(),
            "stop_return" => t.stop_return.map_or("none".into(), |v| v.to_string()),
            "mode" => p.mode.to_string(),
            "population" => p.population.to_string(),
            "elites" => p.elites.to_string(),
            "iterations" => p.iterations.to_string(),
            "horizon" => p.horizon.to_string(),
            "temperature" => p.temperature.to_string(),
            "momentum" => p.momentum.to_string(),
            "gamma" => p.gamma.to_string(),
            "shared_gaussian" => p.shared_gaussian.to_string(),
            "literal_eq4" => p.literal_eq4.to_string(),
            "literal_eq6" => p.literal_eq6.to_string(),
            "greedy" => p.greedy.to_string(),
            "warm_start" => p.warm_start.to_string(),
            "stochastic_model" => p.stochastic_model.to_string(),
            "arch" => m.arch.to_string(),
            "hidden" => m.hidden.to_string(),
            "latent_dim" => m.latent_dim.to_string(),
            "unify_reward" => m.unify_reward.to_string(),
            "lr" => m.adam.lr.to_string(),
            "beta" => m.loss.beta.to_string(),
            "transition_coef" => m.loss.transition.to_string(),
            "reward_coef" => m.loss.reward.to_string(),
            "termination_coef" => m.loss.cont.to_string(),
            "loss_horizon" => t.loss_horizon.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "steps_per_update" => t.steps_per_update.to_string(),
            "replay_capacity" => t.replay_capacity.to_string(),
            "lipschitz_samples" => d.suite.lipschitz_samples.to_string(),
            "rollouts" => d.suite.rollouts.to_string(),
            "regret_starts" => d.suite.regret_starts.to_string(),
            "regret_constant" => d.suite.regret_constant.to_string(),
            "lemma_delta" => d.suite.lemma_delta.to_string(),
            "fit_transitions" => d.fit_transitions.to_string(),
            "fit_updates" => d.fit_updates.to_string(),
            _ => unreachable!("key `{key}` is in the schema"),
        }
    }
}

fn build_env(
    name: &str,
    actuators: usize,
    dim: usize,
    contraction: f64,
    seed: u64,
) -> Result<EnvSpec> {
    match name {
        "linear" => {
            if dim == 0 || !(contraction >= 0.0 && contraction.is_finite()) {
                return Err(Error::Config(
                    "linear env needs linear_dim >= 1 and a finite contraction >= 0".into(),
                ));
            }
            Ok(EnvSpec::linear(LinearPamdp::random(
                dim,
                vec![1, 2],
                contraction,
                seed,
            )?))
        }
        other => EnvSpec::by_name(other, actuators),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn empty_document_gives_table_defaults() {
        let c = RunConfig::from_text("").unwrap();
        assert_eq!(c.env_name, "platform");
        let p = &c.train.planner;
        assert_eq!(
            (p.population, p.elites, p.iterations, p.horizon),
            (1000, 400, 6, 10)
        );
        assert_eq!((p.temperature, p.gamma), (0.5, 0.99));
        assert_eq!(c.train.replay_capacity, 1_000_000);
        assert_eq!((c.train.batch_size, c.train.steps_per_update), (128, 1));
        let m = &c.train.model;
        assert_eq!(m.adam.lr, 3e-4);
        assert_eq!(
            (m.loss.transition, m.loss.reward, m.loss.cont),
            (1.0, 0.5, 1.0)
        );
        assert!(m.unify_reward);
        for env in ["catch_point", "hard_move"] {
            let c = RunConfig::defaults(env).unwrap();
            assert_eq!(c.train.planner.horizon, 5);
            assert!(!c.train.model.unify_reward);
        }
    }

    #[test]
    fn overrides_win_and_are_echoed() {
        let doc = "[run]\nenv = platform\n[planner]\nhorizon = 6 # comment\n";
        let c = RunConfig::load(
            None,
            &parse_document(doc)
                .unwrap()
                .into_iter()
                .chain(set(&[("horizon", "8")]))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(c.train.planner.horizon, 8);
        assert_eq!(c.train.loss_horizon, 8);
        assert!(c.to_text().contains("horizon = 8\n"));
        let again = RunConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn qualified_and_bare_keys() {
        let c = RunConfig::resolve(&set(&[
            ("planner.population", "50"),
            ("elites", "5"),
            ("env", "hard_move"),
            ("actuators", "6"),
        ]))
        .unwrap();
        assert_eq!(c.train.planner.population, 50);
        assert_eq!(c.train.env.action_spec.num_discrete(), 64);
        assert!(RunConfig::resolve(&set(&[("model.population", "50")])).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let err = RunConfig::resolve(&set(&[("elites", "2000")])).unwrap_err();
        assert!(err
            .to_string()
            .contains("elites (2000) must not exceed population (1000)"));
        assert!(matches!(
            RunConfig::resolve(&set(&[("colour", "red")])),
            Err(Error::Config(_))
        ));
        assert!(RunConfig::resolve(&set(&[("population", "many")])).is_err());
        assert!(RunConfig::resolve(&set(&[("greedy", "maybe")])).is_err());
        assert!(RunConfig::resolve(&set(&[("arch", "tree")])).is_err());
        assert!(RunConfig::from_text("[nope]\n").is_err());
        assert!(RunConfig::from_text("[run]\njust words\n").is_err());
        assert!(RunConfig::resolve(&set(&[("env", "atari")])).is_err());
        assert!(parse_override("horizon").is_err());
    }

    #[test]
    fn explicit_loss_horizon_survives() {
        let c = RunConfig::resolve(&set(&[("loss_horizon", "0"), ("horizon", "7")])).unwrap();
        assert_eq!(c.train.loss_horizon, 0);
        assert_eq!(c.diagnose.suite.horizon, 7);
        let c = RunConfig::resolve(&set(&[("stop_return", "1.5")])).unwrap();
        assert_eq!(c.train.stop_return, Some(1.5));
    }
}
