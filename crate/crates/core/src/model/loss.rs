use ndarray::{Array1, Array2, Axis, Zip};

use super::{ActionBatch, DynamicsModel, PredictorTape, RolloutNoise};
use crate::action::TrajectorySegment;
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, sample_batch, sample_log_std_grad, AdamState, GaussianOut, MlpTape, ParamSet,
};

/// Standard-normal noise for the sampled state and reward terms of the loss.
pub type LossNoise = RolloutNoise;

/// Batch-mean loss and its weighted components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub total: f64,
    pub transition: f64,
    pub reward: f64,
    pub cont: f64,
}

/// One Adam state per network of a model.
#[derive(Debug, Clone)]
pub struct ModelOptimizer {
    states: Vec<AdamState>,
}

impl ModelOptimizer {
    pub fn new(model: &DynamicsModel) -> Self {
        Self {
            states: model
                .networks()
                .into_iter()
                .map(|(_, n)| AdamState::new(n))
                .collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, AdamState::steps)
    }
}

/// Segment batch rearranged time-major.
struct Batch {
    horizon: usize,
    s0: Array2<f64>,
    actions: Vec<ActionBatch>,
    s_next: Vec<Array2<f64>>,
    r: Vec<Array1<f64>>,
    c: Vec<Array1<f64>>,
    mask: Vec<Array1<f64>>,
}

struct RewardGroup {
    terminal: bool,
    rows: Vec<usize>,
    out: GaussianOut,
    tape: PredictorTape,
}

struct StepRecord {
    tr_out: GaussianOut,
    tr_tape: PredictorTape,
    c_tape: MlpTape,
    groups: Vec<RewardGroup>,
    es: Array2<f64>,
    er: Array1<f64>,
    ec: Array1<f64>,
    w: Array1<f64>,
}

impl DynamicsModel {
    fn prepare(&self, segs: &[TrajectorySegment]) -> Result<Batch> {
        let first = segs
            .first()
            .ok_or_else(|| Error::InvalidSegment("empty batch".into()))?;
        let len = first.transitions.len();
        let d = self.state_dim;
        if segs.iter().any(|s| s.transitions.len() != len) {
            return Err(Error::InvalidSegment("segments differ in length".into()));
        }
        if segs
            .iter()
            .flat_map(|s| &s.transitions)
            .any(|t| t.s.len() != d || t.s_next.len() != d)
        {
            return Err(Error::ShapeMismatch(format!(
                "segment states are not {d} wide"
            )));
        }
        let s0 = super::stack_rows(segs.iter().map(|s| s.transitions[0].s.as_slice()), d);
        let mut batch = Batch {
            horizon: len - 1,
            s0,
            actions: Vec::with_capacity(len),
            s_next: Vec::with_capacity(len),
            r: Vec::with_capacity(len),
            c: Vec::with_capacity(len),
            mask: Vec::with_capacity(len),
        };
        for t in 0..len {
            batch.actions.push(ActionBatch::new(
                &self.spec,
                segs.iter().map(|s| &s.transitions[t].action),
            )?);
            batch.s_next.push(super::stack_rows(
                segs.iter().map(|s| s.transitions[t].s_next.as_slice()),
                d,
            ));
            batch
                .r
                .push(segs.iter().map(|s| s.transitions[t].r).collect());
            batch
                .c
                .push(segs.iter().map(|s| s.transitions[t].c).collect());
            batch
                .mask
                .push(segs.iter().map(|s| s.loss_mask(t)).collect());
        }
        Ok(batch)
    }

    /// Batch-mean H-step loss. `noise = None` uses predicted means throughout.
    pub fn h_step_loss(
        &self,
        segs: &[TrajectorySegment],
        noise: Option<&LossNoise>,
    ) -> Result<LossStats> {
        Ok(self.run_loss(segs, noise, false)?.0)
    }

    /// Loss and exact gradients for every network.
    pub fn h_step_loss_grad(
        &self,
        segs: &[TrajectorySegment],
        noise: Option<&LossNoise>,
    ) -> Result<(LossStats, DynamicsModel)> {
        let (stats, grads) = self.run_loss(segs, noise, true)?;
        Ok((stats, grads.expect("gradients requested")))
    }

    /// One optimizer step on a batch. Gradients are divided by the loss
    /// horizon (by 1 when the horizon is 0) before each network's Adam update.
    pub fn train_batch(
        &mut self,
        opt: &mut ModelOptimizer,
        segs: &[TrajectorySegment],
        noise: Option<&LossNoise>,
    ) -> Result<LossStats> {
        let (stats, mut grads) = self.h_step_loss_grad(segs, noise)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite("model gradient".into()));
        }
        let horizon = segs[0].horizon();
        grads.scale(1.0 / horizon.max(1) as f64);
        let adam = self.config.adam;
        for (((_, p), (_, g)), st) in self
            .networks_mut()
            .into_iter()
            .zip(grads.networks())
            .zip(opt.states.iter_mut())
        {
            adam_step(p, g, st, &adam)?;
        }
        Ok(stats)
    }

    fn run_loss(
        &self,
        segs: &[TrajectorySegment],
        noise: Option<&LossNoise>,
        want_grad: bool,
    ) -> Result<(LossStats, Option<DynamicsModel>)> {
        let batch = self.prepare(segs)?;
        let n = segs.len();
        let lw = self.config.loss;
        if let Some(nz) = noise {
            if nz.steps() <= batch.horizon || nz.state[0].nrows() != n {
                return Err(Error::ShapeMismatch(
                    "loss noise does not cover the batch".into(),
                ));
            }
        }
        let mut stats = LossStats::default();
        let mut records = Vec::with_capacity(batch.horizon + 1);
        let mut s_hat = batch.s0.clone();

        for t in 0..=batch.horizon {
            let actions = &batch.actions[t];
            let (tr_out, tr_tape) = self.transition.forward(s_hat.view(), actions)?;
            let s_next = sample_batch(&tr_out, noise.map(|nz| nz.state[t].view()));
            let (c_out, c_tape) = self.continue_net.forward(s_next.view())?;
            let c_mean = c_out.mean.column(0).to_owned();

            // routed by the recorded continuation, not the predicted one
            let mut r_hat = Array1::zeros(n);
            let mut groups = Vec::new();
            for (net, rows) in self.reward_groups(&batch.c[t]) {
                if rows.is_empty() {
                    continue;
                }
                let sub_s = s_hat.select(Axis(0), &rows);
                let (out, tape) = net.forward(sub_s.view(), &actions.select(&rows))?;
                let eps = noise.map(|nz| nz.reward[t].select(Axis(0), &rows));
                let r = sample_batch(&out, eps.as_ref().map(|e| e.view()));
                for (j, &row) in rows.iter().enumerate() {
                    r_hat[row] = r[[j, 0]];
                }
                groups.push(RewardGroup {
                    terminal: !std::ptr::eq(net, &self.reward_alive),
                    rows,
                    out,
                    tape,
                });
            }

            let decay = lw.beta.powi(t as i32);
            let w = batch.mask[t].mapv(|m| m * decay / n as f64);
            let es = &s_next - &batch.s_next[t];
            let er = &r_hat - &batch.r[t];
            let ec = &c_mean - &batch.c[t];
            let sq = es.map_axis(Axis(1), |row| row.dot(&row));
            stats.transition += lw.transition * w.dot(&sq);
            stats.reward += lw.reward * w.dot(&(&er * &er));
            stats.cont += lw.cont * w.dot(&(&ec * &ec));

            if want_grad {
                records.push(StepRecord {
                    tr_out,
                    tr_tape,
                    c_tape,
                    groups,
                    es,
                    er,
                    ec,
                    w,
                });
            }
            s_hat = s_next;
        }
        stats.total = stats.transition + stats.reward + stats.cont;
        if !stats.total.is_finite() {
            return Err(Error::NonFinite("H-step loss".into()));
        }
        if !want_grad {
            return Ok((stats, None));
        }

        let mut g = self.zeros_like();
        let mut carry = Array2::<f64>::zeros((n, self.state_dim));
        for (t, rec) in records.iter().enumerate().rev() {
            let mut d_next = carry;
            Zip::from(d_next.rows_mut())
                .and(rec.es.rows())
                .and(&rec.w)
                .for_each(|mut d, e, &w| d.scaled_add(2.0 * lw.transition * w, &e));
            let d_c = (&rec.ec * &rec.w * (2.0 * lw.cont)).insert_axis(Axis(1));
            d_next +=
                &self
                    .continue_net
                    .backward(&rec.c_tape, d_c.view(), None, &mut g.continue_net);

            let d_ls =
                noise.map(|nz| sample_log_std_grad(&rec.tr_out, nz.state[t].view(), d_next.view()));
            let mut d_s = self.transition.backward(
                &rec.tr_tape,
                d_next.view(),
                d_ls.as_ref().map(|a| a.view()),
                &mut g.transition,
            );

            for grp in &rec.groups {
                let d_r: Array2<f64> = Array2::from_shape_fn((grp.rows.len(), 1), |(j, _)| {
                    let row = grp.rows[j];
                    2.0 * lw.reward * rec.w[row] * rec.er[row]
                });
                let d_ls_r = noise.map(|nz| {
                    let eps = nz.reward[t].select(Axis(0), &grp.rows);
                    sample_log_std_grad(&grp.out, eps.view(), d_r.view())
                });
                let (net, gnet) = if grp.terminal {
                    (
                        self.reward_terminal
                            .as_ref()
                            .expect("terminal group implies terminal net"),
                        g.reward_terminal
                            .as_mut()
                            .expect("terminal group implies terminal net"),
                    )
                } else {
                    (&self.reward_alive, &mut g.reward_alive)
                };
                let dx = net.backward(
                    &grp.tape,
                    d_r.view(),
                    d_ls_r.as_ref().map(|a| a.view()),
                    gnet,
                );
                for (j, &row) in grp.rows.iter().enumerate() {
                    let mut dst = d_s.row_mut(row);
                    dst += &dx.row(j);
                }
            }
            carry = d_s;
        }
        Ok((stats, Some(g)))
    }
}
