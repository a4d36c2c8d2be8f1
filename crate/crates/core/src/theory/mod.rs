//! Numerical checks of the model-error and regret bounds.
//!
//! Distances between predicted distributions use the closed-form W2 between
//! diagonal Gaussians; the true environments are deterministic, so their
//! "distributions" are point masses (zero standard deviation).

mod suite;

pub use suite::{run_bound_suite, BoundReport, BoundSuiteConfig, DeltaRow, RegretRow};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::action::{ParamAction, ParamActionSpec};
use crate::env::{uniform_action, EnvSpec};
use crate::error::{Error, Result};
use crate::model::{
    continue_flag, ActionBatch, DynamicsModel, EnvOracle, RolloutNoise, WorldModel,
};
use crate::rng;

/// Squared 2-Wasserstein distance between two diagonal Gaussians:
/// `|mu1 - mu2|^2 + sum_i (s1_i - s2_i)^2`.
pub fn w2_sq_diag_gaussian(mu1: &[f64], s1: &[f64], mu2: &[f64], s2: &[f64]) -> Result<f64> {
    let d = mu1.len();
    if s1.len() != d || mu2.len() != d || s2.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "gaussian widths {}, {}, {}, {}",
            d,
            s1.len(),
            mu2.len(),
            s2.len()
        )));
    }
    if s1.iter().chain(s2).any(|&s| s < 0.0 || s.is_nan()) {
        return Err(Error::InvalidArgument(
            "standard deviations must be nonnegative".into(),
        ));
    }
    let mean: f64 = mu1.iter().zip(mu2).map(|(a, b)| (a - b).powi(2)).sum();
    let cov: f64 = s1.iter().zip(s2).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(mean + cov)
}

/// Squared W2 between two equal-size 1-D samples under the sorted coupling.
pub fn sorted_w2_sq(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "sample sizes {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    Ok(x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64)
}

/// W2 proxy between two `[n, d]` samples: per-dimension sorted couplings,
/// combined in Euclidean norm. Never exceeds the joint W2 of the samples.
pub fn sample_w2(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "samples {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let mut total = 0.0;
    for (ca, cb) in a.axis_iter(Axis(1)).zip(b.axis_iter(Axis(1))) {
        total += sorted_w2_sq(&ca.to_vec(), &cb.to_vec())?;
    }
    Ok(total.sqrt())
}

/// Per-row Gaussian predictions of next state and reward.
#[derive(Debug, Clone)]
pub struct PredictedDist {
    pub next_mean: Array2<f64>,
    pub next_std: Array2<f64>,
    pub reward_mean: Array1<f64>,
    pub reward_std: Array1<f64>,
}

impl PredictedDist {
    /// W2 between row `i` here and row `j` of `other`, for state and reward.
    fn w2_rows(&self, i: usize, other: &Self, j: usize) -> (f64, f64) {
        let row = |m: &Array2<f64>, r: usize| m.row(r).to_vec();
        let t = w2_sq_diag_gaussian(
            &row(&self.next_mean, i),
            &row(&self.next_std, i),
            &row(&other.next_mean, j),
            &row(&other.next_std, j),
        )
        .expect("rows share a width");
        let r = (self.reward_mean[i] - other.reward_mean[j]).powi(2)
            + (self.reward_std[i] - other.reward_std[j]).powi(2);
        (t.sqrt(), r.sqrt())
    }
}

/// A world model whose one-step predictions are diagonal Gaussians.
pub trait DistributionalModel: WorldModel {
    fn predict_dist(&self, states: ArrayView2<f64>, actions: &ActionBatch)
        -> Result<PredictedDist>;
}

impl DistributionalModel for EnvOracle {
    fn predict_dist(
        &self,
        states: ArrayView2<f64>,
        actions: &ActionBatch,
    ) -> Result<PredictedDist> {
        let p = self.step(states, actions, None, None)?;
        Ok(PredictedDist {
            next_std: Array2::zeros(p.next.raw_dim()),
            reward_std: Array1::zeros(p.reward.len()),
            next_mean: p.next,
            reward_mean: p.reward,
        })
    }
}

impl DistributionalModel for DynamicsModel {
    /// The reward head is chosen by the continuation flag of the mean next state.
    fn predict_dist(
        &self,
        states: ArrayView2<f64>,
        actions: &ActionBatch,
    ) -> Result<PredictedDist> {
        let (t, _) = self.transition.forward(states, actions)?;
        let flags = self
            .continue_net
            .forward_mean(t.mean.view())?
            .column(0)
            .mapv(continue_flag);
        let n = states.nrows();
        let mut reward_mean = Array1::zeros(n);
        let mut reward_std = Array1::zeros(n);
        for (net, rows) in self.reward_groups(&flags) {
            if rows.is_empty() {
                continue;
            }
            let s = states.select(Axis(0), &rows);
            let (out, _) = net.forward(s.view(), &actions.select(&rows))?;
            for (j, &row) in rows.iter().enumerate() {
                reward_mean[row] = out.mean[[j, 0]];
                reward_std[row] = out.log_std[[j, 0]].exp();
            }
        }
        Ok(PredictedDist {
            next_std: t.log_std.mapv(f64::exp),
            next_mean: t.mean,
            reward_mean,
            reward_std,
        })
    }
}

/// Max-ratio Lipschitz estimates. Each is a lower bound on the true constant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LipschitzEstimates {
    pub l_t_s: f64,
    pub l_t_k: f64,
    pub l_t_z: f64,
    pub l_r_s: f64,
    pub l_r_k: f64,
    pub l_r_z: f64,
}

impl LipschitzEstimates {
    /// Pairwise minima with `other` (the barred constants).
    pub fn min_with(&self, other: &Self) -> Self {
        Self {
            l_t_s: self.l_t_s.min(other.l_t_s),
            l_t_k: self.l_t_k.min(other.l_t_k),
            l_t_z: self.l_t_z.min(other.l_t_z),
            l_r_s: self.l_r_s.min(other.l_r_s),
            l_r_k: self.l_r_k.min(other.l_r_k),
            l_r_z: self.l_r_z.min(other.l_r_z),
        }
    }

    pub fn values(&self) -> [(&'static str, f64); 6] {
        [
            ("L_T_S", self.l_t_s),
            ("L_T_K", self.l_t_k),
            ("L_T_Z", self.l_t_z),
            ("L_R_S", self.l_r_s),
            ("L_R_K", self.l_r_k),
            ("L_R_Z", self.l_r_z),
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.values()
            .iter()
            .all(|(_, v)| v.is_finite() && *v >= 0.0)
    }
}

/// Worst observed one-step W2 between the environment and a model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelError {
    pub eps_t: f64,
    pub eps_r: f64,
}

fn check_pair<M: WorldModel + ?Sized>(env: &EnvSpec, model: &M) -> Result<()> {
    if env.state_dim != model.state_dim() || &env.action_spec != model.action_spec() {
        return Err(Error::ShapeMismatch(format!(
            "environment {} (state {}, {}) does not match model (state {}, {})",
            env.name(),
            env.state_dim,
            env.action_spec.describe(),
            model.state_dim(),
            model.action_spec().describe()
        )));
    }
    Ok(())
}

fn rows_to_array(rows: &[Vec<f64>], width: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), width), flat).expect("rows share a width")
}

/// `z` drawn at full width, truncated to each action's parameter count.
fn truncate(w: &[f64], spec: &ParamActionSpec, k: usize) -> ParamAction {
    ParamAction::new(k, w[..spec.param_dim(k)].to_vec())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Estimates the six Lipschitz constants of `f` as the largest ratio of
/// output W2 to input distance over `samples` random pairs.
///
/// State pairs share the action; discrete pairs differ in `k` only (at
/// distance 1) with the parameter vector reused; parameter pairs share state and `k`,
/// with point-mass parameter distributions. Zero-distance pairs are skipped.
/// Sample `i` reads only substream `i`, so more samples never lower an estimate.
pub fn estimate_lipschitz<M: DistributionalModel + ?Sized>(
    f: &M,
    env: &EnvSpec,
    samples: usize,
    seed: u64,
) -> Result<LipschitzEstimates> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    check_pair(env, f)?;
    let spec = env.action_spec.clone();
    let nk = spec.num_discrete();
    let width = spec.max_param_dim();
    let key = rng::derive_path(seed, &[rng::labels::THEORY, 1]);

    let mut s1 = Vec::with_capacity(samples);
    let mut s2 = Vec::with_capacity(samples);
    let (mut base, mut k_alt, mut z_alt) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..samples {
        let mut r = rng::stream(key, i as u64);
        s1.push(env.sample_state(&mut r));
        s2.push(env.sample_state(&mut r));
        let k = r.random_range(0..nk);
        let w: Vec<f64> = (0..width).map(|_| r.random_range(-1.0..=1.0)).collect();
        let w2: Vec<f64> = (0..width).map(|_| r.random_range(-1.0..=1.0)).collect();
        let k2 = if nk > 1 {
            (k + r.random_range(1..nk)) % nk
        } else {
            k
        };
        base.push(truncate(&w, &spec, k));
        k_alt.push(truncate(&w, &spec, k2));
        z_alt.push(truncate(&w2, &spec, k));
    }
    let d = env.state_dim;
    let s1a = rows_to_array(&s1, d);
    let s2a = rows_to_array(&s2, d);
    let p_base = f.predict_dist(s1a.view(), &ActionBatch::new(&spec, &base)?)?;
    let p_state = f.predict_dist(s2a.view(), &ActionBatch::new(&spec, &base)?)?;
    let p_k = f.predict_dist(s1a.view(), &ActionBatch::new(&spec, &k_alt)?)?;
    let p_z = f.predict_dist(s1a.view(), &ActionBatch::new(&spec, &z_alt)?)?;

    let mut est = LipschitzEstimates::default();
    let upd = |slot: &mut f64, v: f64| {
        if v.is_finite() && v > *slot {
            *slot = v;
        }
    };
    for i in 0..samples {
        let ds = euclid(&s1[i], &s2[i]);
        if ds > 0.0 {
            let (t, r) = p_base.w2_rows(i, &p_state, i);
            upd(&mut est.l_t_s, t / ds);
            upd(&mut est.l_r_s, r / ds);
        }
        if k_alt[i].k != base[i].k {
            let (t, r) = p_base.w2_rows(i, &p_k, i);
            upd(&mut est.l_t_k, t);
            upd(&mut est.l_r_k, r);
        }
        let dz = euclid(&base[i].z, &z_alt[i].z);
        if dz > 0.0 {
            let (t, r) = p_base.w2_rows(i, &p_z, i);
            upd(&mut est.l_t_z, t / dz);
            upd(&mut est.l_r_z, r / dz);
        }
    }
    Ok(est)
}

/// Worst one-step W2 between the environment's point-mass outcome and the
/// model's Gaussian over `samples` random state-action pairs.
pub fn estimate_model_error<M: DistributionalModel + ?Sized>(
    env: &EnvSpec,
    model: &M,
    samples: usize,
    seed: u64,
) -> Result<ModelError> {
    check_pair(env, model)?;
    let key = rng::derive_path(seed, &[rng::labels::THEORY, 2]);
    let mut states = Vec::with_capacity(samples);
    let mut actions = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut r = rng::stream(key, i as u64);
        states.push(env.sample_state(&mut r));
        actions.push(uniform_action(&env.action_spec, &mut r));
    }
    let s = rows_to_array(&states, env.state_dim);
    let batch = ActionBatch::new(&env.action_spec, &actions)?;
    let truth = EnvOracle::new(env.clone()).predict_dist(s.view(), &batch)?;
    let pred = model.predict_dist(s.view(), &batch)?;
    let mut err = ModelError::default();
    for i in 0..samples {
        let (t, r) = truth.w2_rows(i, &pred, i);
        err.eps_t = err.eps_t.max(t);
        err.eps_r = err.eps_r.max(r);
    }
    Ok(err)
}

/// `delta_hat(n)` for every `n` in `1..=horizon`.
///
/// The environment and the model are rolled from the same initial states
/// under the same uniform action sequences; the model samples its noise.
pub fn empirical_delta_curve<M: WorldModel + ?Sized>(
    env: &EnvSpec,
    model: &M,
    horizon: usize,
    rollouts: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if horizon == 0 || rollouts == 0 {
        return Err(Error::InvalidArgument(
            "horizon and rollouts must be positive".into(),
        ));
    }
    check_pair(env, model)?;
    let spec = &env.action_spec;
    let key = rng::derive_path(seed, &[rng::labels::THEORY, 3]);
    let mut starts = Vec::with_capacity(rollouts);
    let mut seqs: Vec<Vec<ParamAction>> = vec![Vec::with_capacity(rollouts); horizon];
    let mut noise = RolloutNoise::zeros(rollouts, env.state_dim, horizon);
    for i in 0..rollouts {
        let mut r = rng::stream(key, i as u64);
        starts.push(env.sample_state(&mut r));
        for step in seqs.iter_mut() {
            step.push(uniform_action(spec, &mut r));
        }
        noise.fill_row(i, &mut r);
    }
    let batches = seqs
        .iter()
        .map(|a| ActionBatch::new(spec, a))
        .collect::<Result<Vec<_>>>()?;
    let start = rows_to_array(&starts, env.state_dim);
    let truth = EnvOracle::new(env.clone()).imagine(start.view(), &batches, None)?;
    let pred = model.imagine(start.view(), &batches, Some(&noise))?;
    (1..=horizon)
        .map(|n| sample_w2(truth.states[n].view(), pred.states[n].view()))
        .collect()
}

/// `delta_hat(n)` for a single `n >= 1`.
pub fn empirical_delta_n<M: WorldModel + ?Sized>(
    env: &EnvSpec,
    model: &M,
    seed: u64,
    n: usize,
    rollouts: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    Ok(empirical_delta_curve(env, model, n, rollouts, seed)?[n - 1])
}

fn geometric(l: f64, n: usize) -> f64 {
    (0..n).map(|i| l.powi(i as i32)).sum()
}

/// Right-hand side of the n-step prediction error bound:
///
/// `eps_T S + L_Z (d_ww + d_kk) S + L_K sum_i L_S^i 1(k_{n-i} != k^_{n-i})`
/// with `S = sum_{i<n} L_S^i`. `mismatch[t - 1]` flags step `t`; missing
/// entries count as matched. `bar` should hold the barred constants.
pub fn delta_n_bound(
    bar: &LipschitzEstimates,
    eps_t: f64,
    n: usize,
    mismatch: &[bool],
    d_kk: f64,
    d_ww: f64,
) -> f64 {
    let s = geometric(bar.l_t_s, n);
    let k_term: f64 = (0..n)
        .filter(|&i| mismatch.get(n - i - 1).copied().unwrap_or(false))
        .map(|i| bar.l_t_s.powi(i as i32))
        .sum();
    eps_t * s + bar.l_t_z * (d_ww + d_kk) * s + bar.l_t_k * k_term
}

/// Bracketed regret expression with unit constant:
///
/// `(L_R_K + L_R_S L_T_K) m + H (eps_R + L_R_S eps_T + (L_R_Z + L_R_S L_T_Z)((m/H) d_kk + d_ww))`.
pub fn regret_bound(
    bar: &LipschitzEstimates,
    err: &ModelError,
    horizon: usize,
    m: usize,
    d_kk: f64,
    d_ww: f64,
) -> f64 {
    let h = horizon.max(1) as f64;
    let m = m as f64;
    (bar.l_r_k + bar.l_r_s * bar.l_t_k) * m
        + h * (err.eps_r
            + bar.l_r_s * err.eps_t
            + (bar.l_r_z + bar.l_r_s * bar.l_t_z) * (m / h * d_kk + d_ww))
}

/// Sampling-error bound `(2m/H) sqrt(|Z|) + (2/N) ln(2|Z|/delta)`.
pub fn lemma_bound(
    m: usize,
    horizon: usize,
    z_card: usize,
    samples: usize,
    delta: f64,
) -> Result<f64> {
    if samples == 0 || !(delta > 0.0 && delta < 1.0) || horizon == 0 || m > horizon || z_card == 0 {
        return Err(Error::InvalidArgument(format!(
            "lemma bound needs N >= 1, 0 < delta < 1, 0 <= m <= H, |Z| >= 1 (got N={samples}, delta={delta}, m={m}, H={horizon}, |Z|={z_card})"
        )));
    }
    let z = z_card as f64;
    Ok(2.0 * m as f64 / horizon as f64 * z.sqrt() + 2.0 / samples as f64 * (2.0 * z / delta).ln())
}
