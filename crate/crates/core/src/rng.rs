//! Deterministic, counter-addressed random streams.
//!
//! Every consumer derives its generator from a root seed plus a path of
//! integer labels (run, env step, planner iteration, sequence index ...).
//! Streams are therefore independent of the order in which they are
//! created and of how work is split between threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a label into a key.
#[inline]
pub fn derive(key: u64, label: u64) -> u64 {
    mix64(key ^ mix64(label.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// Key reached by folding every label in `path` into `root`.
pub fn derive_path(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(root), |k, &l| derive(k, l))
}

/// Generator for `key`, substream `stream`.
pub fn stream(key: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

/// Labels used to keep the different consumers of one root seed apart.
pub mod labels {
    pub const ENV_RESET: u64 = 1;
    pub const WARMUP: u64 = 2;
    pub const PLAN: u64 = 3;
    pub const TRAIN_BATCH: u64 = 4;
    pub const TRAIN_NOISE: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const INIT: u64 = 7;
    pub const THEORY: u64 = 8;
}
