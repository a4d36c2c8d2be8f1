use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::action::{ParamAction, ParamActionSpec};
use crate::error::{Error, Result};
use crate::nn::{GaussianOut, Mlp, MlpTape, ParamSet};

/// How a predictor consumes the hybrid action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// One network over `[x, one_hot(k), padded z]`.
    Parallel,
    /// One network over `[x, padded z]` with `K` stacked output blocks; block `k` is used.
    Masking,
    /// `[x, one_hot(k)]` to a latent, then `[latent, z_k padded to the widest slot]`.
    Sequential,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Parallel, Arch::Masking, Arch::Sequential];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Parallel => "parallel",
            Arch::Masking => "masking",
            Arch::Sequential => "sequential",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Arch::Parallel),
            "masking" => Ok(Arch::Masking),
            "sequential" => Ok(Arch::Sequential),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (parallel, masking, sequential)"
            ))),
        }
    }
}

/// A batch of actions in every layout the architectures need.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBatch {
    pub actions: Vec<ParamAction>,
    /// `[B, K]`.
    pub one_hot: Array2<f64>,
    /// `[B, total_param_width]`, each `z_k` in its own slot.
    pub padded: Array2<f64>,
    /// `[B, max_param_dim]`, `z_k` left-aligned.
    pub compact: Array2<f64>,
}

impl ActionBatch {
    pub fn new<'a, I>(spec: &ParamActionSpec, actions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a ParamAction>,
    {
        let actions: Vec<ParamAction> = actions.into_iter().cloned().collect();
        let b = actions.len();
        let mut one_hot = Array2::zeros((b, spec.num_discrete()));
        let mut padded = Array2::zeros((b, spec.total_param_width()));
        let mut compact = Array2::zeros((b, spec.max_param_dim()));
        for (i, a) in actions.iter().enumerate() {
            spec.check(a)?;
            one_hot[[i, a.k]] = 1.0;
            let off = spec.slot_offset(a.k);
            for (j, &z) in a.z.iter().enumerate() {
                padded[[i, off + j]] = z;
                compact[[i, j]] = z;
            }
        }
        Ok(Self {
            actions,
            one_hot,
            padded,
            compact,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn k(&self, i: usize) -> usize {
        self.actions[i].k
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            actions: rows.iter().map(|&r| self.actions[r].clone()).collect(),
            one_hot: self.one_hot.select(Axis(0), rows),
            padded: self.padded.select(Axis(0), rows),
            compact: self.compact.select(Axis(0), rows),
        }
    }
}

/// Gaussian-output predictor conditioned on an input vector and a hybrid action.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    arch: Arch,
    in_dim: usize,
    out_dim: usize,
    num_discrete: usize,
    /// The single network, or the first (latent) stage for `Sequential`.
    pub stage1: Mlp,
    /// Second stage, `Sequential` only.
    pub stage2: Option<Mlp>,
}

#[derive(Debug, Clone)]
pub struct PredictorTape {
    stage1: MlpTape,
    stage2: Option<MlpTape>,
    ks: Vec<usize>,
}

fn hcat(parts: &[ArrayView2<f64>]) -> Array2<f64> {
    concatenate(Axis(1), parts).expect("row counts agree")
}

impl Predictor {
    pub fn new<R: Rng + ?Sized>(
        arch: Arch,
        spec: &ParamActionSpec,
        in_dim: usize,
        out_dim: usize,
        hidden: usize,
        latent_dim: usize,
        rng: &mut R,
    ) -> Self {
        let k = spec.num_discrete();
        let (stage1, stage2) = match arch {
            Arch::Parallel => (
                Mlp::new(in_dim + k + spec.total_param_width(), hidden, out_dim, rng),
                None,
            ),
            Arch::Masking => (
                Mlp::new(in_dim + spec.total_param_width(), hidden, out_dim * k, rng),
                None,
            ),
            Arch::Sequential => (
                Mlp::new(in_dim + k, hidden, latent_dim, rng),
                Some(Mlp::new(
                    latent_dim + spec.max_param_dim(),
                    hidden,
                    out_dim,
                    rng,
                )),
            ),
        };
        Self {
            arch,
            in_dim,
            out_dim,
            num_discrete: k,
            stage1,
            stage2,
        }
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            stage1: self.stage1.zeros_like(),
            stage2: self.stage2.as_ref().map(Mlp::zeros_like),
            ..*self
        }
    }

    pub fn nets(&self) -> Vec<(&'static str, &Mlp)> {
        let mut v = vec![("stage1", &self.stage1)];
        if let Some(s2) = &self.stage2 {
            v.push(("stage2", s2));
        }
        v
    }

    pub fn nets_mut(&mut self) -> Vec<(&'static str, &mut Mlp)> {
        let mut v = vec![("stage1", &mut self.stage1)];
        if let Some(s2) = &mut self.stage2 {
            v.push(("stage2", s2));
        }
        v
    }

    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        a: &ActionBatch,
    ) -> Result<(GaussianOut, PredictorTape)> {
        if x.ncols() != self.in_dim || x.nrows() != a.len() {
            return Err(Error::ShapeMismatch(format!(
                "predictor input {}x{} with {} actions, expected width {}",
                x.nrows(),
                x.ncols(),
                a.len(),
                self.in_dim
            )));
        }
        if a.one_hot.ncols() != self.num_discrete {
            return Err(Error::ShapeMismatch(format!(
                "actions have {} discrete choices, predictor expects {}",
                a.one_hot.ncols(),
                self.num_discrete
            )));
        }
        match self.arch {
            Arch::Parallel => {
                let input = hcat(&[x, a.one_hot.view(), a.padded.view()]);
                let (out, tape) = self.stage1.forward(input.view())?;
                Ok((out, self.tape(tape, None, Vec::new())))
            }
            Arch::Masking => {
                let input = hcat(&[x, a.padded.view()]);
                let (full, tape) = self.stage1.forward(input.view())?;
                let ks: Vec<usize> = a.actions.iter().map(|a| a.k).collect();
                let d = self.out_dim;
                let mut mean = Array2::zeros((x.nrows(), d));
                let mut log_std = Array2::zeros((x.nrows(), d));
                for (i, &k) in ks.iter().enumerate() {
                    mean.row_mut(i)
                        .assign(&full.mean.slice(s![i, k * d..(k + 1) * d]));
                    log_std
                        .row_mut(i)
                        .assign(&full.log_std.slice(s![i, k * d..(k + 1) * d]));
                }
                Ok((GaussianOut { mean, log_std }, self.tape(tape, None, ks)))
            }
            Arch::Sequential => {
                let stage2 = self.stage2.as_ref().expect("sequential has two stages");
                let first = hcat(&[x, a.one_hot.view()]);
                let (latent, tape1) = self.stage1.forward(first.view())?;
                let second = hcat(&[latent.mean.view(), a.compact.view()]);
                let (out, tape2) = stage2.forward(second.view())?;
                Ok((out, self.tape(tape1, Some(tape2), Vec::new())))
            }
        }
    }

    fn tape(&self, stage1: MlpTape, stage2: Option<MlpTape>, ks: Vec<usize>) -> PredictorTape {
        PredictorTape { stage1, stage2, ks }
    }

    /// Accumulates parameter gradients into `grads`; returns the gradient with
    /// respect to the `x` input (the action inputs are not differentiated).
    pub fn backward(
        &self,
        tape: &PredictorTape,
        d_mean: ArrayView2<f64>,
        d_log_std: Option<ArrayView2<f64>>,
        grads: &mut Predictor,
    ) -> Array2<f64> {
        let dx = match self.arch {
            Arch::Parallel => {
                self.stage1
                    .backward(&tape.stage1, d_mean, d_log_std, &mut grads.stage1)
            }
            Arch::Masking => {
                let d = self.out_dim;
                let width = d * self.num_discrete;
                let b = d_mean.nrows();
                let mut full_mean = Array2::zeros((b, width));
                let mut full_ls = d_log_std.map(|_| Array2::zeros((b, width)));
                for (i, &k) in tape.ks.iter().enumerate() {
                    full_mean
                        .slice_mut(s![i, k * d..(k + 1) * d])
                        .assign(&d_mean.row(i));
                    if let (Some(dst), Some(src)) = (full_ls.as_mut(), d_log_std.as_ref()) {
                        dst.slice_mut(s![i, k * d..(k + 1) * d]).assign(&src.row(i));
                    }
                }
                self.stage1.backward(
                    &tape.stage1,
                    full_mean.view(),
                    full_ls.as_ref().map(|a| a.view()),
                    &mut grads.stage1,
                )
            }
            Arch::Sequential => {
                let stage2 = self.stage2.as_ref().expect("sequential has two stages");
                let g2 = grads.stage2.as_mut().expect("sequential has two stages");
                let tape2 = tape
                    .stage2
                    .as_ref()
                    .expect("sequential tape has two stages");
                let d_second = stage2.backward(tape2, d_mean, d_log_std, g2);
                let latent = self.stage1.out_dim();
                let d_latent = d_second.slice(s![.., ..latent]);
                self.stage1
                    .backward(&tape.stage1, d_latent, None, &mut grads.stage1)
            }
        };
        dx.slice(s![.., ..self.in_dim]).to_owned()
    }
}

impl ParamSet for Predictor {
    fn slices(&self) -> Vec<&[f64]> {
        self.nets()
            .into_iter()
            .flat_map(|(_, n)| n.slices())
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let Predictor { stage1, stage2, .. } = self;
        let mut v = stage1.slices_mut();
        if let Some(s2) = stage2 {
            v.extend(s2.slices_mut());
        }
        v
    }
}
