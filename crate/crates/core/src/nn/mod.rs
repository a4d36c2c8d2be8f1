//! Small dense networks with hand-written reverse mode, Adam, and a
//! bit-exact text checkpoint format.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use mlp::{gaussian_sample, GaussianOut, Mlp, MlpTape, LOG_STD_MAX, LOG_STD_MIN, TENSOR_NAMES};
pub(crate) use mlp::{sample_batch, sample_log_std_grad};

/// A fixed ordered collection of parameter tensors viewed as flat slices.
pub trait ParamSet {
    fn slices(&self) -> Vec<&[f64]>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    fn set_flat(&mut self, values: &[f64]) -> crate::Result<()> {
        if values.len() != self.num_params() {
            return Err(crate::Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut at = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&values[at..at + s.len()]);
            at += s.len();
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn fill_zero(&mut self) {
        for s in self.slices_mut() {
            s.fill(0.0);
        }
    }
}
