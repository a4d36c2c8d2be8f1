use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Outcome;
use crate::action::{ParamAction, ParamActionSpec};
use crate::error::{Error, Result};
use crate::rng;

/// Smooth synthetic PAMDP with linear dynamics and reward:
///
/// `s' = A s + B_k z + o_k`, `r = w . s + u_k . z + v_k`, never terminating.
///
/// Its Lipschitz constants are known in closed form, which makes it the
/// reference subject for the model and bound diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPamdp {
    /// Row-major `d x d`.
    pub a: Vec<f64>,
    /// Per action, row-major `d x param_dims[k]`.
    pub b: Vec<Vec<f64>>,
    pub offset: Vec<Vec<f64>>,
    pub reward_state: Vec<f64>,
    pub reward_param: Vec<Vec<f64>>,
    pub reward_offset: Vec<f64>,
    pub max_steps: usize,
    spec: ParamActionSpec,
    dim: usize,
}

impl LinearPamdp {
    pub fn new(
        a: Vec<f64>,
        b: Vec<Vec<f64>>,
        offset: Vec<Vec<f64>>,
        reward_state: Vec<f64>,
        reward_param: Vec<Vec<f64>>,
        reward_offset: Vec<f64>,
        spec: ParamActionSpec,
    ) -> Result<Self> {
        let dim = reward_state.len();
        let k = spec.num_discrete();
        let ok = a.len() == dim * dim
            && b.len() == k
            && offset.len() == k
            && reward_param.len() == k
            && reward_offset.len() == k
            && (0..k).all(|i| {
                b[i].len() == dim * spec.param_dim(i)
                    && offset[i].len() == dim
                    && reward_param[i].len() == spec.param_dim(i)
            });
        if !ok {
            return Err(Error::ShapeMismatch(
                "linear PAMDP matrices do not match the action spec".into(),
            ));
        }
        Ok(Self {
            a,
            b,
            offset,
            reward_state,
            reward_param,
            reward_offset,
            max_steps: 50,
            spec,
            dim,
        })
    }

    /// Random instance whose state matrix has spectral norm `contraction`.
    pub fn random(dim: usize, param_dims: Vec<usize>, contraction: f64, seed: u64) -> Result<Self> {
        let spec = ParamActionSpec::new(param_dims)?;
        let mut r = rng::stream(rng::derive(seed, rng::labels::INIT), 0);
        let mut gauss = |scale: f64, n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut r);
                    scale * e
                })
                .collect::<Vec<f64>>()
        };
        let mut a = gauss(1.0, dim * dim);
        let norm = spectral_norm(&a, dim);
        a.iter_mut().for_each(|v| *v *= contraction / norm);
        let k = spec.num_discrete();
        let b = (0..k)
            .map(|i| gauss(0.3, dim * spec.param_dim(i)))
            .collect();
        let offset = (0..k).map(|_| gauss(0.1, dim)).collect();
        let reward_state = gauss(0.5, dim);
        let reward_param = (0..k).map(|i| gauss(0.5, spec.param_dim(i))).collect();
        let reward_offset = gauss(0.2, k);
        Self::new(
            a,
            b,
            offset,
            reward_state,
            reward_param,
            reward_offset,
            spec,
        )
    }

    /// `s' = s + B_k z` with a constant reward; used to check model fitting.
    pub fn integrator(b: Vec<Vec<f64>>, spec: ParamActionSpec, reward: f64) -> Result<Self> {
        let k = spec.num_discrete();
        let dim = if spec.param_dim(0) == 0 {
            return Err(Error::InvalidArgument(
                "integrator needs a parameterized first action".into(),
            ));
        } else {
            b[0].len() / spec.param_dim(0)
        };
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = 1.0;
        }
        let reward_param = (0..k).map(|i| vec![0.0; spec.param_dim(i)]).collect();
        Self::new(
            a,
            b,
            vec![vec![0.0; dim]; k],
            vec![0.0; dim],
            reward_param,
            vec![reward; k],
            spec,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.dim
    }

    pub fn action_spec(&self) -> &ParamActionSpec {
        &self.spec
    }

    pub fn initial<R: Rng + ?Sized>(&self, r: &mut R) -> Vec<f64> {
        self.sample_state(r)
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, r: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| r.random_range(-1.0..=1.0)).collect()
    }

    pub fn dynamics(&self, obs: &[f64], a: &ParamAction) -> Outcome {
        let d = self.dim;
        let p = self.spec.param_dim(a.k);
        let bk = &self.b[a.k];
        let next = (0..d)
            .map(|i| {
                let sa: f64 = (0..d).map(|j| self.a[i * d + j] * obs[j]).sum();
                let bz: f64 = (0..p).map(|j| bk[i * p + j] * a.z[j]).sum();
                sa + bz + self.offset[a.k][i]
            })
            .collect();
        let reward = dot(&self.reward_state, obs)
            + dot(&self.reward_param[a.k], &a.z)
            + self.reward_offset[a.k];
        Outcome {
            next,
            reward,
            cont: 1.0,
            success: false,
        }
    }

    /// Spectral norm of the state matrix.
    pub fn state_gain(&self) -> f64 {
        spectral_norm(&self.a, self.dim)
    }

    /// Largest spectral norm over the parameter matrices.
    pub fn param_gain(&self) -> f64 {
        (0..self.spec.num_discrete())
            .map(|k| rect_spectral_norm(&self.b[k], self.dim, self.spec.param_dim(k)))
            .fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Spectral norm of a row-major square matrix by power iteration on `A^T A`.
pub fn spectral_norm(a: &[f64], d: usize) -> f64 {
    rect_spectral_norm(a, d, d)
}

pub(crate) fn rect_spectral_norm(m: &[f64], rows: usize, cols: usize) -> f64 {
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..cols).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut sigma = 0.0;
    for _ in 0..500 {
        let mv: Vec<f64> = (0..rows)
            .map(|i| (0..cols).map(|j| m[i * cols + j] * v[j]).sum())
            .collect();
        let mut w: Vec<f64> = (0..cols)
            .map(|j| (0..rows).map(|i| m[i * cols + j] * mv[i]).sum())
            .collect();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        w.iter_mut().for_each(|x| *x /= n);
        sigma = n.sqrt();
        v = w;
    }
    sigma
}
