//! Parameterized-action data model.
//!
//! A hybrid action is a discrete index `k` paired with a continuous parameter
//! vector whose width depends on `k`. All parameter components live in
//! `[-1, 1]`; environments rescale internally.

use crate::error::{Error, Result};

/// Shape of a parameterized action space: `param_dims[k]` is the width of the
/// continuous parameter attached to discrete action `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParamActionSpec {
    param_dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl ParamActionSpec {
    pub fn new(param_dims: Vec<usize>) -> Result<Self> {
        if param_dims.is_empty() {
            return Err(Error::InvalidArgument(
                "an action space needs at least one discrete action".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(param_dims.len());
        let mut acc = 0;
        for &d in &param_dims {
            offsets.push(acc);
            acc += d;
        }
        Ok(Self {
            param_dims,
            offsets,
        })
    }

    /// Number of discrete actions `K`.
    pub fn num_discrete(&self) -> usize {
        self.param_dims.len()
    }

    pub fn param_dims(&self) -> &[usize] {
        &self.param_dims
    }

    pub fn param_dim(&self, k: usize) -> usize {
        self.param_dims[k]
    }

    /// Sum of all parameter widths: the width of the zero-padded parameter block.
    pub fn total_param_width(&self) -> usize {
        self.param_dims.iter().sum()
    }

    pub fn max_param_dim(&self) -> usize {
        self.param_dims.iter().copied().max().unwrap_or(0)
    }

    /// Column where action `k`'s slot begins inside the padded parameter block.
    pub fn slot_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Width of `encode_action` output.
    pub fn encoding_width(&self) -> usize {
        self.num_discrete() + self.total_param_width()
    }

    /// True iff `a` lies in this action space.
    pub fn validate(&self, a: &ParamAction) -> bool {
        a.k < self.num_discrete()
            && a.z.len() == self.param_dims[a.k]
            && a.z.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    pub fn check(&self, a: &ParamAction) -> Result<()> {
        if self.validate(a) {
            Ok(())
        } else {
            Err(Error::InvalidAction(format!(
                "k={} with {} parameters does not fit param_dims {:?} within [-1, 1]",
                a.k,
                a.z.len(),
                self.param_dims
            )))
        }
    }

    /// `[one_hot(k, K), padded_z]` where `padded_z` has width
    /// `total_param_width` and holds `a.z` in action `k`'s slot.
    pub fn encode(&self, a: &ParamAction) -> Result<Vec<f64>> {
        self.check(a)?;
        let mut out = vec![0.0; self.encoding_width()];
        out[a.k] = 1.0;
        let base = self.num_discrete() + self.offsets[a.k];
        out[base..base + a.z.len()].copy_from_slice(&a.z);
        Ok(out)
    }

    /// Writes the padded parameter block (width `total_param_width`) into `out`.
    pub fn write_padded(&self, a: &ParamAction, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.total_param_width());
        out.fill(0.0);
        let off = self.offsets[a.k];
        out[off..off + a.z.len()].copy_from_slice(&a.z);
    }

    /// Stable text description, used for checkpoint hashing.
    pub fn describe(&self) -> String {
        let dims: Vec<String> = self.param_dims.iter().map(|d| d.to_string()).collect();
        format!("K={};dims={}", self.num_discrete(), dims.join(","))
    }
}

/// A discrete action with its continuous parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamAction {
    pub k: usize,
    pub z: Vec<f64>,
}

impl ParamAction {
    /// Builds an action, clamping every parameter component into `[-1, 1]`.
    /// NaN components become 0.
    pub fn new(k: usize, z: Vec<f64>) -> Self {
        let z = z
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) })
            .collect();
        Self { k, z }
    }

    /// Builds an action without clamping; use `ParamActionSpec::validate` to check it.
    pub fn raw(k: usize, z: Vec<f64>) -> Self {
        Self { k, z }
    }
}

/// Kronecker distance on discrete actions.
pub fn discrete_distance(k1: usize, k2: usize) -> u8 {
    u8::from(k1 != k2)
}

/// One environment transition. `c = 1` means the episode continues.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub action: ParamAction,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub c: f64,
}

/// `H + 1` chained transitions from one episode.
///
/// Segments drawn from episodes shorter than `H + 1` are padded with absorbing
/// copies of the final transition (`r = 0`, `c = 0`); `valid_len` counts the
/// real records and the loss ignores the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    pub transitions: Vec<Transition>,
    pub start_index: usize,
    pub valid_len: usize,
}

impl TrajectorySegment {
    pub fn new(transitions: Vec<Transition>, start_index: usize) -> Result<Self> {
        let valid_len = transitions.len();
        let seg = Self {
            transitions,
            start_index,
            valid_len,
        };
        seg.check()?;
        Ok(seg)
    }

    /// Pads `transitions` to `len` records with absorbing terminal copies.
    pub fn padded(
        mut transitions: Vec<Transition>,
        start_index: usize,
        len: usize,
    ) -> Result<Self> {
        let valid_len = transitions.len();
        if valid_len == 0 || valid_len > len {
            return Err(Error::InvalidSegment(format!(
                "cannot pad {valid_len} transitions to {len}"
            )));
        }
        let last = transitions[valid_len - 1].clone();
        while transitions.len() < len {
            transitions.push(Transition {
                s: last.s_next.clone(),
                action: last.action.clone(),
                r: 0.0,
                s_next: last.s_next.clone(),
                c: 0.0,
            });
        }
        let seg = Self {
            transitions,
            start_index,
            valid_len,
        };
        seg.check()?;
        Ok(seg)
    }

    /// Loss horizon `H` (segment holds `H + 1` records).
    pub fn horizon(&self) -> usize {
        self.transitions.len().saturating_sub(1)
    }

    /// 1.0 for real records, 0.0 for padding.
    pub fn loss_mask(&self, i: usize) -> f64 {
        if i < self.valid_len {
            1.0
        } else {
            0.0
        }
    }

    fn check(&self) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::InvalidSegment("segment is empty".into()));
        }
        for (i, pair) in self.transitions.windows(2).enumerate() {
            if pair[0].s_next != pair[1].s {
                return Err(Error::InvalidSegment(format!(
                    "records {i} and {} are not chained",
                    i + 1
                )));
            }
        }
        if self.transitions[..self.valid_len - 1]
            .iter()
            .any(|t| t.c == 0.0)
        {
            return Err(Error::InvalidSegment(
                "terminal record before the end of the segment".into(),
            ));
        }
        Ok(())
    }
}
