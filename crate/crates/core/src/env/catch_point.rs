use rand::Rng;

use super::Outcome;
use crate::action::ParamAction;

/// Catch a target point in the unit box within a limited number of trials.
///
/// Observation: `[agent_x, agent_y, target_x, target_y, trials_left / 10]`.
/// `move(d)` shifts the agent by `0.1 d`; `catch` succeeds within radius 0.15.
/// A successful catch ends the episode and zeroes `trials_left`, so a zero
/// trial count marks every terminal observation.
pub struct CatchPoint;

impl CatchPoint {
    pub const STATE_DIM: usize = 5;
    pub const MAX_STEPS: usize = 50;
    pub const MOVE: usize = 0;
    pub const CATCH: usize = 1;
    pub const TRIALS: usize = 10;
    pub const STEP: f64 = 0.1;
    pub const RADIUS: f64 = 0.15;
    pub const MOVE_COST: f64 = -0.05;
    pub const MISS_COST: f64 = -1.0;
    pub const CATCH_REWARD: f64 = 10.0;

    pub fn initial<R: Rng + ?Sized>(r: &mut R) -> Vec<f64> {
        let tx = r.random_range(0.0..1.0);
        let ty = r.random_range(0.0..1.0);
        vec![0.5, 0.5, tx, ty, 1.0]
    }

    fn trials(obs: &[f64]) -> usize {
        (obs[4] * Self::TRIALS as f64).round().max(0.0) as usize
    }

    pub fn dynamics(obs: &[f64], a: &ParamAction) -> Outcome {
        let trials = Self::trials(obs);
        if trials == 0 {
            return Outcome {
                next: obs.to_vec(),
                reward: 0.0,
                cont: 0.0,
                success: false,
            };
        }
        let mut next = obs.to_vec();
        match a.k {
            Self::MOVE => {
                next[0] = (obs[0] + Self::STEP * a.z[0]).clamp(0.0, 1.0);
                next[1] = (obs[1] + Self::STEP * a.z[1]).clamp(0.0, 1.0);
                Outcome {
                    next,
                    reward: Self::MOVE_COST,
                    cont: 1.0,
                    success: false,
                }
            }
            _ => {
                let dist = (obs[0] - obs[2]).hypot(obs[1] - obs[3]);
                if dist <= Self::RADIUS {
                    next[4] = 0.0;
                    Outcome {
                        next,
                        reward: Self::CATCH_REWARD,
                        cont: 0.0,
                        success: true,
                    }
                } else {
                    let left = trials - 1;
                    next[4] = left as f64 / Self::TRIALS as f64;
                    Outcome {
                        next,
                        reward: Self::MISS_COST,
                        cont: if left == 0 { 0.0 } else { 1.0 },
                        success: false,
                    }
                }
            }
        }
    }

    pub fn sample_state<R: Rng + ?Sized>(r: &mut R) -> Vec<f64> {
        let trials = r.random_range(1..=Self::TRIALS);
        vec![
            r.random_range(0.0..1.0),
            r.random_range(0.0..1.0),
            r.random_range(0.0..1.0),
            r.random_range(0.0..1.0),
            trials as f64 / Self::TRIALS as f64,
        ]
    }
}
