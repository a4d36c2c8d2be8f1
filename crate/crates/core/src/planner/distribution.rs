use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::action::{ParamAction, ParamActionSpec};
use crate::error::{Error, Result};
use crate::rng;

pub const SIGMA_INIT: f64 = 0.5;
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Sampling distribution for one plan timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDist {
    /// Categorical weights over discrete actions.
    pub theta: Vec<f64>,
    /// One Gaussian per discrete action, or a single shared one.
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
}

/// `C = {theta_t, mu_t, sigma_t}` for every step of the plan horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanDistribution {
    pub steps: Vec<StepDist>,
    spec: ParamActionSpec,
    shared: bool,
}

/// Update hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRule {
    /// Softmax temperature on returns.
    pub temperature: f64,
    /// Weight kept on the previous distribution.
    pub momentum: f64,
    /// Normalize the Gaussian statistics by the weight of all elites instead
    /// of only those that chose the action.
    pub literal_eq6: bool,
}

impl PlanDistribution {
    /// Uniform categorical, zero means, `SIGMA_INIT` spreads; `len` steps.
    pub fn new(spec: &ParamActionSpec, len: usize) -> Self {
        Self::build(spec, len, false)
    }

    /// Variant with one Gaussian per step over the widest parameter vector;
    /// action `k` reads its leading `param_dim(k)` entries.
    pub fn shared(spec: &ParamActionSpec, len: usize) -> Self {
        Self::build(spec, len, true)
    }

    fn build(spec: &ParamActionSpec, len: usize, shared: bool) -> Self {
        let k = spec.num_discrete();
        let widths: Vec<usize> = if shared {
            vec![spec.max_param_dim()]
        } else {
            spec.param_dims().to_vec()
        };
        let step = StepDist {
            theta: vec![1.0 / k as f64; k],
            mu: widths.iter().map(|&w| vec![0.0; w]).collect(),
            sigma: widths.iter().map(|&w| vec![SIGMA_INIT; w]).collect(),
        };
        Self {
            steps: vec![step; len],
            spec: spec.clone(),
            shared,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn spec(&self) -> &ParamActionSpec {
        &self.spec
    }

    /// Gaussian group used by discrete action `k`.
    pub fn group(&self, k: usize) -> usize {
        if self.shared {
            0
        } else {
            k
        }
    }

    /// `(mu, sigma)` for action `k` at step `t`.
    pub fn gaussian(&self, t: usize, k: usize) -> (&[f64], &[f64]) {
        let g = self.group(k);
        let d = self.spec.param_dim(k);
        (&self.steps[t].mu[g][..d], &self.steps[t].sigma[g][..d])
    }

    /// Drops the first step and appends a fresh one.
    pub fn shifted(&self) -> Self {
        let fresh = Self::build(&self.spec, 1, self.shared).steps.remove(0);
        let mut steps: Vec<StepDist> = self.steps.iter().skip(1).cloned().collect();
        steps.push(fresh);
        Self {
            steps,
            spec: self.spec.clone(),
            shared: self.shared,
        }
    }

    /// Draws one action for step `t`.
    pub fn sample_step<R: Rng + ?Sized>(&self, t: usize, r: &mut R) -> ParamAction {
        let k = sample_categorical(&self.steps[t].theta, r);
        let (mu, sigma) = self.gaussian(t, k);
        let z = mu
            .iter()
            .zip(sigma)
            .map(|(m, s)| {
                let e: f64 = StandardNormal.sample(r);
                (m + s * e).clamp(-1.0, 1.0)
            })
            .collect();
        ParamAction::raw(k, z)
    }

    /// Action of highest probability: the categorical mode with mean parameters.
    pub fn mode_step(&self, t: usize) -> ParamAction {
        let theta = &self.steps[t].theta;
        let k = argmax(theta);
        let (mu, _) = self.gaussian(t, k);
        ParamAction::raw(k, mu.iter().map(|m| m.clamp(-1.0, 1.0)).collect())
    }

    /// Mean categorical entropy over steps (nats).
    pub fn mean_entropy(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .steps
            .iter()
            .map(|s| {
                -s.theta
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum::<f64>()
            })
            .sum();
        total / self.steps.len() as f64
    }

    /// Mean over every sigma entry of every step.
    pub fn mean_sigma(&self) -> f64 {
        let (sum, n) = self
            .steps
            .iter()
            .flat_map(|s| s.sigma.iter().flatten())
            .fold((0.0, 0usize), |(a, n), &v| (a + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Checks the simplex and sigma-floor invariants.
    pub fn is_valid(&self) -> bool {
        self.steps.iter().all(|s| {
            let sum: f64 = s.theta.iter().sum();
            (sum - 1.0).abs() < 1e-9
                && s.theta.iter().all(|&p| p >= 0.0)
                && s.sigma.iter().flatten().all(|&v| v >= SIGMA_FLOOR)
                && s.mu.iter().flatten().all(|v| v.is_finite())
        })
    }
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn sample_categorical<R: Rng + ?Sized>(theta: &[f64], r: &mut R) -> usize {
    let u: f64 = r.random::<f64>() * theta.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in theta.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// `count` sequences of `dist.len()` actions; sequence `i` draws only from
/// substream `i` of `key`, so the set does not depend on how work is split.
pub fn sample_sequences(dist: &PlanDistribution, count: usize, key: u64) -> Vec<Vec<ParamAction>> {
    (0..count)
        .map(|i| sample_sequence(dist, key, i as u64))
        .collect()
}

pub(crate) fn sample_sequence(dist: &PlanDistribution, key: u64, index: u64) -> Vec<ParamAction> {
    let mut r = rng::stream(key, index);
    (0..dist.len())
        .map(|t| dist.sample_step(t, &mut r))
        .collect()
}

/// Indices of the `n` largest returns, best first, lower index on ties.
/// Non-finite returns are never selected.
pub fn select_elites(returns: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..returns.len())
        .filter(|&i| returns[i].is_finite())
        .collect();
    idx.sort_by(|&a, &b| returns[b].total_cmp(&returns[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Softmax of `temperature * J` over the elites, with max subtraction.
pub fn elite_weights(returns: &[f64], elites: &[usize], temperature: f64) -> Vec<f64> {
    let max = elites
        .iter()
        .map(|&i| returns[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = elites
        .iter()
        .map(|&i| (temperature * (returns[i] - max)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// One refit of `prev` towards the elite sequences.
///
/// Per step, `theta` moves to the weighted elite frequencies; each Gaussian
/// moves to the weighted statistics of the elites that used it. A Gaussian
/// with no elite support at a step is carried over unchanged.
pub fn update_distribution(
    prev: &PlanDistribution,
    sequences: &[Vec<ParamAction>],
    elites: &[usize],
    returns: &[f64],
    rule: &UpdateRule,
) -> Result<PlanDistribution> {
    if elites.is_empty() {
        return Err(Error::EmptyElites);
    }
    if elites
        .iter()
        .any(|&i| i >= sequences.len() || i >= returns.len())
    {
        return Err(Error::InvalidArgument("elite index out of range".into()));
    }
    let w = elite_weights(returns, elites, rule.temperature);
    let alpha = rule.momentum;
    let mut next = prev.clone();
    for (t, step) in next.steps.iter_mut().enumerate() {
        let old = &prev.steps[t];
        let mut freq = vec![0.0; old.theta.len()];
        for (wi, &i) in w.iter().zip(elites) {
            freq[sequences[i][t].k] += wi;
        }
        for (k, p) in step.theta.iter_mut().enumerate() {
            *p = (1.0 - alpha) * freq[k] + alpha * old.theta[k];
        }

        for g in 0..old.mu.len() {
            for j in 0..old.mu[g].len() {
                let support: Vec<(f64, f64)> = w
                    .iter()
                    .zip(elites)
                    .filter_map(|(&wi, &i)| {
                        let a = &sequences[i][t];
                        (prev.group(a.k) == g && j < a.z.len()).then(|| (wi, a.z[j]))
                    })
                    .collect();
                let mass: f64 = support.iter().map(|(wi, _)| wi).sum();
                if support.is_empty() || mass <= 0.0 {
                    continue;
                }
                let denom = if rule.literal_eq6 {
                    w.iter().sum()
                } else {
                    mass
                };
                let mean = support.iter().map(|(wi, z)| wi * z).sum::<f64>() / denom;
                let mu = (1.0 - alpha) * mean + alpha * old.mu[g][j];
                let var = support
                    .iter()
                    .map(|(wi, z)| wi * (z - mu).powi(2))
                    .sum::<f64>()
                    / denom;
                let sigma = (1.0 - alpha) * var.sqrt() + alpha * old.sigma[g][j];
                step.mu[g][j] = mu;
                step.sigma[g][j] = sigma.max(SIGMA_FLOOR);
            }
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ParamActionSpec {
        ParamActionSpec::new(vec![1, 2, 0, 1]).unwrap()
    }

    fn rule(alpha: f64) -> UpdateRule {
        UpdateRule {
            temperature: 0.5,
            momentum: alpha,
            literal_eq6: false,
        }
    }

    #[test]
    fn init_is_uniform_centered() {
        let d = PlanDistribution::new(&spec(), 3);
        for s in &d.steps {
            assert_eq!(s.theta, vec![0.25; 4]);
            assert!(s.mu.iter().flatten().all(|&m| m == 0.0));
            assert!(s.sigma.iter().flatten().all(|&v| v == 0.5));
        }
        assert!(d.is_valid());
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn degenerate_categorical_and_collapsed_gaussian() {
        let mut d = PlanDistribution::new(&spec(), 2);
        for s in &mut d.steps {
            s.theta = vec![0.0, 1.0, 0.0, 0.0];
            s.mu[1] = vec![0.3, 0.3];
            s.sigma[1] = vec![SIGMA_FLOOR; 2];
        }
        for seq in sample_sequences(&d, 50, 7) {
            for a in seq {
                assert_eq!(a.k, 1);
                assert!(a.z.iter().all(|z| (z - 0.3).abs() < 0.01));
            }
        }
    }

    #[test]
    fn sampling_is_reproducible_and_prefix_stable() {
        let d = PlanDistribution::new(&spec(), 4);
        let a = sample_sequences(&d, 16, 11);
        assert_eq!(a, sample_sequences(&d, 16, 11));
        assert_eq!(&a[..8], &sample_sequences(&d, 8, 11)[..]);
        assert_ne!(a, sample_sequences(&d, 16, 12));
    }

    #[test]
    fn elite_selection() {
        assert_eq!(select_elites(&[3.0, 1.0, 2.0], 2), vec![0, 2]);
        assert_eq!(select_elites(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
        assert_eq!(
            select_elites(&[f64::NEG_INFINITY, 0.0, -5.0], 2),
            vec![1, 2]
        );
        assert_eq!(select_elites(&[f64::NEG_INFINITY, 0.0], 2), vec![1]);
    }

    fn seq(k: usize, z: Vec<f64>) -> Vec<ParamAction> {
        vec![ParamAction::raw(k, z)]
    }

    #[test]
    fn all_elites_on_one_action_without_momentum() {
        let prev = PlanDistribution::new(&spec(), 1);
        let seqs = vec![seq(0, vec![0.2]), seq(0, vec![0.4])];
        let next = update_distribution(&prev, &seqs, &[0, 1], &[1.0, 1.0], &rule(0.0)).unwrap();
        assert_eq!(next.steps[0].theta, vec![1.0, 0.0, 0.0, 0.0]);
        assert!((next.steps[0].mu[0][0] - 0.3).abs() < 1e-12);
        assert!((next.steps[0].sigma[0][0] - 0.1).abs() < 1e-12);
        // unsupported actions keep their exact parameters
        assert_eq!(next.steps[0].mu[1], prev.steps[0].mu[1]);
        assert_eq!(next.steps[0].sigma[3], prev.steps[0].sigma[3]);
    }

    #[test]
    fn full_momentum_keeps_distribution() {
        let prev = PlanDistribution::new(&spec(), 1);
        let seqs = vec![seq(0, vec![0.9]), seq(1, vec![-0.3, 0.4])];
        let next = update_distribution(&prev, &seqs, &[0, 1], &[2.0, 1.0], &rule(1.0)).unwrap();
        assert_eq!(next, prev);
    }

    #[test]
    fn softmax_weights_two_to_one() {
        let prev = PlanDistribution::new(&spec(), 1);
        let seqs = vec![seq(0, vec![0.0]), seq(1, vec![0.0, 0.0])];
        let xi = 0.5;
        let returns = [2f64.ln() / xi, 0.0];
        let next = update_distribution(&prev, &seqs, &[0, 1], &returns, &rule(0.0)).unwrap();
        let th = &next.steps[0].theta;
        assert!((th[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((th[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(th[2], 0.0);
    }

    #[test]
    fn literal_normalization_shrinks_rare_actions() {
        let prev = PlanDistribution::new(&spec(), 1);
        let seqs = vec![
            seq(0, vec![0.8]),
            seq(3, vec![0.0]),
            seq(3, vec![0.0]),
            seq(3, vec![0.0]),
        ];
        let elites = [0, 1, 2, 3];
        let returns = [0.0; 4];
        let lit = UpdateRule {
            literal_eq6: true,
            ..rule(0.0)
        };
        let a = update_distribution(&prev, &seqs, &elites, &returns, &rule(0.0)).unwrap();
        let b = update_distribution(&prev, &seqs, &elites, &returns, &lit).unwrap();
        assert!((a.steps[0].mu[0][0] - 0.8).abs() < 1e-12);
        assert!((b.steps[0].mu[0][0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_elites_rejected() {
        let prev = PlanDistribution::new(&spec(), 1);
        assert!(matches!(
            update_distribution(&prev, &[], &[], &[], &rule(0.1)),
            Err(Error::EmptyElites)
        ));
    }

    #[test]
    fn shared_gaussian_uses_leading_entries() {
        let prev = PlanDistribution::shared(&spec(), 1);
        assert_eq!(prev.steps[0].mu.len(), 1);
        assert_eq!(prev.gaussian(0, 0).0.len(), 1);
        assert_eq!(prev.gaussian(0, 1).0.len(), 2);
        let seqs = vec![seq(0, vec![0.6]), seq(1, vec![0.2, -0.4])];
        let next = update_distribution(&prev, &seqs, &[0, 1], &[0.0, 0.0], &rule(0.0)).unwrap();
        assert!((next.steps[0].mu[0][0] - 0.4).abs() < 1e-12);
        assert!((next.steps[0].mu[0][1] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn shifted_appends_fresh_step() {
        let mut d = PlanDistribution::new(&spec(), 3);
        d.steps[1].theta = vec![1.0, 0.0, 0.0, 0.0];
        let s = d.shifted();
        assert_eq!(s.len(), 3);
        assert_eq!(s.steps[0].theta, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.steps[2], PlanDistribution::new(&spec(), 1).steps[0]);
    }

    #[test]
    fn entropy_and_sigma_summaries() {
        let d = PlanDistribution::new(&spec(), 2);
        assert!((d.mean_entropy() - 4f64.ln()).abs() < 1e-12);
        assert!((d.mean_sigma() - 0.5).abs() < 1e-12);
    }
}
