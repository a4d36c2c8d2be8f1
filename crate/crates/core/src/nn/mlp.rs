use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::ParamSet;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `in -> hidden -> hidden -> (mean, log_std)` with ReLU between layers.
///
/// The same type doubles as a gradient container of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_mean: Array2<f64>,
    pub b_mean: Array1<f64>,
    pub w_log_std: Array2<f64>,
    pub b_log_std: Array1<f64>,
}

/// Batched Gaussian head output; rows are samples.
#[derive(Debug, Clone)]
pub struct GaussianOut {
    pub mean: Array2<f64>,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Array2<f64>,
}

/// Activations kept by `forward` for `backward`.
#[derive(Debug, Clone)]
pub struct MlpTape {
    input: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    raw_log_std: Array2<f64>,
}

pub const TENSOR_NAMES: [&str; 8] = [
    "w1",
    "b1",
    "w2",
    "b2",
    "w_mean",
    "b_mean",
    "w_log_std",
    "b_log_std",
];

impl Mlp {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut layer = |fan_in: usize, fan_out: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
            let b = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
            (w, b)
        };
        let (w1, b1) = layer(in_dim, hidden);
        let (w2, b2) = layer(hidden, hidden);
        let (w_mean, b_mean) = layer(hidden, out_dim);
        let (w_log_std, b_log_std) = layer(hidden, out_dim);
        Self {
            w1,
            b1,
            w2,
            b2,
            w_mean,
            b_mean,
            w_log_std,
            b_log_std,
        }
    }

    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize) -> Self {
        Self {
            w1: Array2::zeros((in_dim, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            w_mean: Array2::zeros((hidden, out_dim)),
            b_mean: Array1::zeros(out_dim),
            w_log_std: Array2::zeros((hidden, out_dim)),
            b_log_std: Array1::zeros(out_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.hidden(), self.out_dim())
    }

    pub fn in_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w_mean.ncols()
    }

    /// `(rows, cols)` of each tensor in `TENSOR_NAMES` order; biases are `(1, n)`.
    pub fn tensor_shapes(&self) -> [(usize, usize); 8] {
        let (i, h, o) = (self.in_dim(), self.hidden(), self.out_dim());
        [
            (i, h),
            (1, h),
            (h, h),
            (1, h),
            (h, o),
            (1, o),
            (h, o),
            (1, o),
        ]
    }

    /// Batched forward pass.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(GaussianOut, MlpTape)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        let mut h1 = x.dot(&self.w1) + &self.b1;
        h1.mapv_inplace(relu);
        let mut h2 = h1.dot(&self.w2) + &self.b2;
        h2.mapv_inplace(relu);
        let mean = h2.dot(&self.w_mean) + &self.b_mean;
        let raw_log_std = h2.dot(&self.w_log_std) + &self.b_log_std;
        let log_std = raw_log_std.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        Ok((
            GaussianOut { mean, log_std },
            MlpTape {
                input: x.to_owned(),
                h1,
                h2,
                raw_log_std,
            },
        ))
    }

    /// Mean head only, without keeping activations.
    pub fn forward_mean(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} inputs, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        let mut h1 = x.dot(&self.w1) + &self.b1;
        h1.mapv_inplace(relu);
        let mut h2 = h1.dot(&self.w2) + &self.b2;
        h2.mapv_inplace(relu);
        Ok(h2.dot(&self.w_mean) + &self.b_mean)
    }

    /// Single-input convenience wrapper around `forward`.
    pub fn forward_one(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let view = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let (out, _) = self.forward(view)?;
        Ok((
            out.mean.into_raw_vec_and_offset().0,
            out.log_std.into_raw_vec_and_offset().0,
        ))
    }

    /// Reverse pass: accumulates parameter gradients into `grads` and returns
    /// the gradient with respect to the input batch.
    ///
    /// The log-std head contributes no gradient where its clamp is active.
    pub fn backward(
        &self,
        tape: &MlpTape,
        d_mean: ArrayView2<f64>,
        d_log_std: Option<ArrayView2<f64>>,
        grads: &mut Mlp,
    ) -> Array2<f64> {
        let h2t = tape.h2.t();
        general_mat_mul(1.0, &h2t, &d_mean, 1.0, &mut grads.w_mean);
        grads.b_mean += &d_mean.sum_axis(Axis(0));
        let mut dh2 = d_mean.dot(&self.w_mean.t());

        if let Some(d_ls) = d_log_std {
            let mut d_raw = d_ls.to_owned();
            d_raw.zip_mut_with(&tape.raw_log_std, |g, &raw| {
                if !(raw > LOG_STD_MIN && raw < LOG_STD_MAX) {
                    *g = 0.0;
                }
            });
            general_mat_mul(1.0, &h2t, &d_raw, 1.0, &mut grads.w_log_std);
            grads.b_log_std += &d_raw.sum_axis(Axis(0));
            general_mat_mul(1.0, &d_raw, &self.w_log_std.t(), 1.0, &mut dh2);
        }

        dh2.zip_mut_with(&tape.h2, relu_grad);
        general_mat_mul(1.0, &tape.h1.t(), &dh2, 1.0, &mut grads.w2);
        grads.b2 += &dh2.sum_axis(Axis(0));

        let mut dh1 = dh2.dot(&self.w2.t());
        dh1.zip_mut_with(&tape.h1, relu_grad);
        general_mat_mul(1.0, &tape.input.t(), &dh1, 1.0, &mut grads.w1);
        grads.b1 += &dh1.sum_axis(Axis(0));

        dh1.dot(&self.w1.t())
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[inline]
fn relu_grad(g: &mut f64, &activation: &f64) {
    if activation <= 0.0 {
        *g = 0.0;
    }
}

impl ParamSet for Mlp {
    fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
            self.w_mean.as_slice().expect("standard layout"),
            self.b_mean.as_slice().expect("standard layout"),
            self.w_log_std.as_slice().expect("standard layout"),
            self.b_log_std.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.w_mean.as_slice_mut().expect("standard layout"),
            self.b_mean.as_slice_mut().expect("standard layout"),
            self.w_log_std.as_slice_mut().expect("standard layout"),
            self.b_log_std.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// `mean + exp(log_std) * noise`.
pub fn gaussian_sample(mean: &[f64], log_std: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if mean.len() != log_std.len() || mean.len() != noise.len() {
        return Err(Error::ShapeMismatch(format!(
            "gaussian_sample widths {} / {} / {}",
            mean.len(),
            log_std.len(),
            noise.len()
        )));
    }
    Ok(mean
        .iter()
        .zip(log_std)
        .zip(noise)
        .map(|((m, s), e)| m + s.exp() * e)
        .collect())
}

/// Batched reparameterized sample; `noise` of `None` returns the mean.
pub(crate) fn sample_batch(out: &GaussianOut, noise: Option<ArrayView2<f64>>) -> Array2<f64> {
    match noise {
        None => out.mean.clone(),
        Some(eps) => {
            let mut s = out.log_std.mapv(f64::exp);
            s.zip_mut_with(&eps, |v, &e| *v *= e);
            s + &out.mean
        }
    }
}

/// Gradient of a reparameterized sample w.r.t. the (clamped) log-std, given
/// the upstream gradient on the sample.
pub(crate) fn sample_log_std_grad(
    out: &GaussianOut,
    noise: ArrayView2<f64>,
    d_sample: ArrayView2<f64>,
) -> Array2<f64> {
    let mut g = out.log_std.mapv(f64::exp);
    g.zip_mut_with(&noise, |v, &e| *v *= e);
    g.zip_mut_with(&d_sample, |v, &d| *v *= d);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(3, 4, 2);
        let (m, s) = net.forward_one(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(m, vec![0.0, 0.0]);
        assert_eq!(s, vec![0.0, 0.0]);
    }

    #[test]
    fn single_path_network_passes_positive_input() {
        let mut net = Mlp::zeros(1, 1, 1);
        net.w1[[0, 0]] = 1.0;
        net.w2[[0, 0]] = 1.0;
        net.w_mean[[0, 0]] = 1.0;
        for x in [0.1, 0.7, 3.0] {
            let (m, _) = net.forward_one(&[x]).unwrap();
            assert!((m[0] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let mut net = Mlp::zeros(1, 1, 1);
        net.b_log_std[0] = 7.0;
        let (_, s) = net.forward_one(&[0.0]).unwrap();
        assert_eq!(s, vec![2.0]);
        net.b_log_std[0] = -9.0;
        let (_, s) = net.forward_one(&[0.0]).unwrap();
        assert_eq!(s, vec![-5.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let net = Mlp::zeros(3, 4, 2);
        assert!(matches!(
            net.forward_one(&[1.0]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn gaussian_sample_examples() {
        assert_eq!(
            gaussian_sample(&[1.0, 2.0], &[0.3, -1.0], &[0.0, 0.0]).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(
            gaussian_sample(&[0.0, 0.0], &[0.0, 0.0], &[1.0, -1.0]).unwrap(),
            vec![1.0, -1.0]
        );
        let s = gaussian_sample(&[2.0], &[3f64.ln()], &[0.5]).unwrap();
        assert!((s[0] - 3.5).abs() < 1e-12);
        assert!(gaussian_sample(&[0.0], &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn least_squares_gradient_on_linear_net() {
        // hidden units see positive pre-activations only, so the net is linear
        // in w_mean and the gradient is h2^T (mean - y).
        let mut r = rng::stream(5, 0);
        let mut net = Mlp::new(2, 3, 1, &mut r);
        net.b1.fill(5.0);
        net.b2.fill(5.0);
        net.w2.mapv_inplace(f64::abs);
        let x = array![[0.2, -0.1], [0.4, 0.3]];
        let y = array![[1.0], [-0.5]];
        let (out, tape) = net.forward(x.view()).unwrap();
        let resid = &out.mean - &y;
        let mut g = net.zeros_like();
        net.backward(&tape, resid.view(), None, &mut g);
        let expected = tape.h2.t().dot(&resid);
        for (a, b) in g.w_mean.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g.b_mean[0] - resid.sum()).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut r = rng::stream(1, 0);
        let net = Mlp::new(2, 3, 2, &mut r);
        let (out, tape) = net.forward(array![[0.1, 0.2]].view()).unwrap();
        let zeros = Array2::zeros(out.mean.raw_dim());
        let mut g = net.zeros_like();
        let dx = net.backward(&tape, zeros.view(), Some(zeros.view()), &mut g);
        assert!(g.flat().iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }
}
