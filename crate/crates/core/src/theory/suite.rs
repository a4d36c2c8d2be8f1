use std::fmt::Write as _;

use super::{
    delta_n_bound, empirical_delta_curve, estimate_lipschitz, estimate_model_error, lemma_bound,
    regret_bound, DistributionalModel, LipschitzEstimates, ModelError,
};
use crate::action::ParamAction;
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::model::{ActionBatch, EnvOracle, WorldModel};
use crate::planner::{plan, PlannerConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSuiteConfig {
    pub lipschitz_samples: usize,
    pub rollouts: usize,
    pub horizon: usize,
    /// Used for both the reference (true-dynamics) plan and the model plan.
    /// The suite forces `gamma = 1`, greedy decoding and mean predictions.
    pub planner: PlannerConfig,
    pub regret_starts: usize,
    /// Allowed ratio between the empirical regret and the bracketed bound.
    pub regret_constant: f64,
    pub lemma_delta: f64,
    pub seed: u64,
}

impl Default for BoundSuiteConfig {
    fn default() -> Self {
        Self {
            lipschitz_samples: 10_000,
            rollouts: 2000,
            horizon: 5,
            planner: PlannerConfig {
                population: 500,
                elites: 200,
                ..PlannerConfig::default()
            },
            regret_starts: 5,
            regret_constant: 4.0,
            lemma_delta: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRow {
    pub n: usize,
    pub empirical: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretRow {
    pub start: usize,
    pub m: usize,
    pub d_kk: f64,
    pub d_ww: f64,
    pub empirical: f64,
    pub bound: f64,
    pub pass: bool,
    pub lemma_lhs: f64,
    pub lemma_rhs: f64,
    pub lemma_pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub env: String,
    pub horizon: usize,
    pub lipschitz_samples: usize,
    pub rollouts: usize,
    pub regret_constant: f64,
    pub env_lipschitz: LipschitzEstimates,
    pub model_lipschitz: LipschitzEstimates,
    pub bar: LipschitzEstimates,
    pub error: ModelError,
    pub deltas: Vec<DeltaRow>,
    pub regrets: Vec<RegretRow>,
}

fn within(empirical: f64, bound: f64) -> bool {
    empirical <= bound * (1.0 + 1e-9) + 1e-12
}

impl BoundReport {
    pub fn delta_pass(&self) -> bool {
        self.deltas.iter().all(|d| d.pass)
    }

    pub fn regret_pass(&self) -> bool {
        self.regrets.iter().all(|r| r.pass)
    }

    pub fn lemma_pass(&self) -> bool {
        self.regrets.iter().all(|r| r.lemma_pass)
    }

    /// Verdict over the n-step and regret checks. Lemma rows compare one
    /// planner run against a high-probability bound and are reported only.
    pub fn all_pass(&self) -> bool {
        self.delta_pass() && self.regret_pass()
    }

    pub fn to_text(&self) -> String {
        let verdict = |b: bool| if b { "pass" } else { "FAIL" };
        let mut s = String::new();
        writeln!(s, "bound-report 1").unwrap();
        writeln!(s, "env {}", self.env).unwrap();
        writeln!(s, "horizon {}", self.horizon).unwrap();
        writeln!(s, "lipschitz_samples {}", self.lipschitz_samples).unwrap();
        writeln!(s, "rollouts {}", self.rollouts).unwrap();
        writeln!(
            s,
            "note distances are unsquared W2; sample W2 uses per-dimension sorted couplings"
        )
        .unwrap();
        writeln!(s, "note Lipschitz constants are max-ratio lower bounds").unwrap();
        writeln!(
            s,
            "note lemma rows are informational and do not enter the verdict"
        )
        .unwrap();
        for (tag, est) in [
            ("env", &self.env_lipschitz),
            ("model", &self.model_lipschitz),
            ("bar", &self.bar),
        ] {
            let vals: Vec<String> = est
                .values()
                .iter()
                .map(|(k, v)| format!("{k}={v:.6}"))
                .collect();
            writeln!(s, "lipschitz {tag} {}", vals.join(" ")).unwrap();
        }
        writeln!(
            s,
            "model_error eps_T={:.6} eps_R={:.6}",
            self.error.eps_t, self.error.eps_r
        )
        .unwrap();
        for d in &self.deltas {
            writeln!(
                s,
                "delta n={} empirical={:.6} bound={:.6} {}",
                d.n,
                d.empirical,
                d.bound,
                verdict(d.pass)
            )
            .unwrap();
        }
        for r in &self.regrets {
            writeln!(
                s,
                "regret start={} m={} d_kk={:.6} d_ww={:.6} empirical={:.6} bound={:.6} constant={} {}",
                r.start,
                r.m,
                r.d_kk,
                r.d_ww,
                r.empirical,
                r.bound,
                self.regret_constant,
                verdict(r.pass)
            )
            .unwrap();
            writeln!(
                s,
                "lemma start={} lhs={:.6} rhs={:.6} {}",
                r.start,
                r.lemma_lhs,
                r.lemma_rhs,
                if r.lemma_pass { "within" } else { "exceeds" }
            )
            .unwrap();
        }
        writeln!(s, "verdict {}", verdict(self.all_pass())).unwrap();
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,name,empirical,bound,pass\n");
        for (tag, est) in [
            ("lipschitz_env", &self.env_lipschitz),
            ("lipschitz_model", &self.model_lipschitz),
            ("lipschitz_bar", &self.bar),
        ] {
            for (k, v) in est.values() {
                writeln!(s, "{tag},{k},{v},,").unwrap();
            }
        }
        writeln!(s, "model_error,eps_T,{},,", self.error.eps_t).unwrap();
        writeln!(s, "model_error,eps_R,{},,", self.error.eps_r).unwrap();
        for d in &self.deltas {
            writeln!(s, "delta,{},{},{},{}", d.n, d.empirical, d.bound, d.pass).unwrap();
        }
        for r in &self.regrets {
            writeln!(
                s,
                "regret,{},{},{},{}",
                r.start,
                r.empirical,
                r.bound * self.regret_constant,
                r.pass
            )
            .unwrap();
            writeln!(
                s,
                "lemma,{},{},{},{}",
                r.start, r.lemma_lhs, r.lemma_rhs, r.lemma_pass
            )
            .unwrap();
        }
        s
    }
}

fn padded_distance(a: &ParamAction, b: &ParamAction, width: usize) -> f64 {
    (0..width)
        .map(|i| {
            let x = a.z.get(i).copied().unwrap_or(0.0);
            let y = b.z.get(i).copied().unwrap_or(0.0);
            (x - y).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Rewards of `actions` from `s0`, one start state, under mean predictions.
fn rewards<M: WorldModel + ?Sized>(
    world: &M,
    s0: &[f64],
    actions: &[ParamAction],
) -> Result<Vec<f64>> {
    let start = ndarray::Array2::from_shape_vec((1, s0.len()), s0.to_vec()).expect("one row");
    let batches = actions
        .iter()
        .map(|a| ActionBatch::new(world.action_spec(), [a]))
        .collect::<Result<Vec<_>>>()?;
    let roll = world.imagine(start.view(), &batches, None)?;
    Ok(roll.rewards.row(0).to_vec())
}

/// Estimates every constant for `env` and `model`, measures the n-step error
/// for `n = 1..=horizon`, compares plans made with the true dynamics and with
/// the model, and evaluates each bound against its empirical counterpart.
pub fn run_bound_suite<M: DistributionalModel + ?Sized>(
    env: &EnvSpec,
    model: &M,
    cfg: &BoundSuiteConfig,
) -> Result<BoundReport> {
    if cfg.horizon == 0 {
        return Err(Error::InvalidArgument(
            "suite horizon must be positive".into(),
        ));
    }
    let oracle = EnvOracle::new(env.clone());
    let env_l = estimate_lipschitz(&oracle, env, cfg.lipschitz_samples, cfg.seed)?;
    let model_l = estimate_lipschitz(model, env, cfg.lipschitz_samples, cfg.seed)?;
    let bar = env_l.min_with(&model_l);
    let error = estimate_model_error(env, model, cfg.lipschitz_samples, cfg.seed)?;

    let curve = empirical_delta_curve(env, model, cfg.horizon, cfg.rollouts, cfg.seed)?;
    let deltas = curve
        .iter()
        .enumerate()
        .map(|(i, &emp)| {
            let bound = delta_n_bound(&bar, error.eps_t, i + 1, &[], 0.0, 0.0);
            DeltaRow {
                n: i + 1,
                empirical: emp,
                bound,
                pass: within(emp, bound),
            }
        })
        .collect();

    let pcfg = PlannerConfig {
        horizon: cfg.horizon,
        gamma: 1.0,
        greedy: true,
        stochastic_model: false,
        warm_start: false,
        ..cfg.planner.clone()
    };
    let width = env.action_spec.max_param_dim();
    let key = rng::derive_path(cfg.seed, &[rng::labels::THEORY, 4]);
    let mut regrets = Vec::with_capacity(cfg.regret_starts);
    for j in 0..cfg.regret_starts {
        let mut r = rng::stream(key, j as u64);
        let s0 = env.sample_state(&mut r);
        let plan_key = rng::derive(key, j as u64);
        let best = plan(&oracle, &s0, &pcfg, None, plan_key)?.distribution;
        let ours = plan(model, &s0, &pcfg, None, plan_key)?.distribution;
        let a_best: Vec<ParamAction> = (0..cfg.horizon).map(|t| best.mode_step(t)).collect();
        let a_ours: Vec<ParamAction> = (0..cfg.horizon).map(|t| ours.mode_step(t)).collect();
        let r_true = rewards(&oracle, &s0, &a_best)?;
        let r_model = rewards(model, &s0, &a_ours)?;
        let empirical: f64 = r_true
            .iter()
            .zip(&r_model)
            .map(|(a, b)| (a - b).abs())
            .sum();
        let (mut m, mut d_kk, mut d_ww) = (0usize, 0.0f64, 0.0f64);
        for (a, b) in a_best.iter().zip(&a_ours) {
            let d = padded_distance(a, b, width);
            if a.k != b.k {
                m += 1;
                d_kk = d_kk.max(d);
            } else {
                d_ww = d_ww.max(d);
            }
        }
        let bound = regret_bound(&bar, &error, cfg.horizon, m, d_kk, d_ww);
        let lemma_lhs = m as f64 / cfg.horizon as f64 * d_kk + d_ww;
        let lemma_rhs = lemma_bound(
            m,
            cfg.horizon,
            width.max(1),
            pcfg.population,
            cfg.lemma_delta,
        )?;
        regrets.push(RegretRow {
            start: j,
            m,
            d_kk,
            d_ww,
            empirical,
            bound,
            pass: within(empirical, cfg.regret_constant * bound),
            lemma_lhs,
            lemma_rhs,
            lemma_pass: within(lemma_lhs, lemma_rhs),
        });
    }

    Ok(BoundReport {
        env: env.name().to_string(),
        horizon: cfg.horizon,
        lipschitz_samples: cfg.lipschitz_samples,
        rollouts: cfg.rollouts,
        regret_constant: cfg.regret_constant,
        env_lipschitz: env_l,
        model_lipschitz: model_l,
        bar,
        error,
        deltas,
        regrets,
    })
}
