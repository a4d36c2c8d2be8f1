use rand::Rng;

use super::Outcome;
use crate::action::ParamAction;

/// One-dimensional track with a gap and an enemy.
///
/// Observation: `[x, ended]`. Actions run / hop / leap advance by
/// `base_k * (p + 1) / 2`. Hop is immune to the enemy, leap to the gap. The
/// per-step reward is the progress made, so the undiscounted return equals the
/// final position and lies in `[0, 1]`.
pub struct Platform;

impl Platform {
    pub const STATE_DIM: usize = 2;
    pub const MAX_STEPS: usize = 50;
    pub const RUN: usize = 0;
    pub const HOP: usize = 1;
    pub const LEAP: usize = 2;
    pub const STRIDE: [f64; 3] = [0.05, 0.10, 0.20];
    pub const GAP: (f64, f64) = (0.40, 0.45);
    pub const ENEMY: f64 = 0.70;
    pub const ENEMY_RADIUS: f64 = 0.02;

    pub fn initial() -> Vec<f64> {
        vec![0.0, 0.0]
    }

    pub fn dynamics(obs: &[f64], a: &ParamAction) -> Outcome {
        let x = obs[0];
        if obs[1] != 0.0 {
            return absorbing(obs);
        }
        let dx = Self::STRIDE[a.k] * (a.z[0] + 1.0) / 2.0;
        let x2 = x + dx;
        let in_gap = a.k != Self::LEAP && x2 >= Self::GAP.0 && x2 <= Self::GAP.1;
        // The swept interval [x, x2] touching the enemy's zone kills anything but a hop.
        let hit_enemy = a.k != Self::HOP
            && x2 > Self::ENEMY - Self::ENEMY_RADIUS
            && x < Self::ENEMY + Self::ENEMY_RADIUS;
        if in_gap || hit_enemy {
            return Outcome {
                next: vec![x2, 1.0],
                reward: x2 - x,
                cont: 0.0,
                success: false,
            };
        }
        if x2 >= 1.0 {
            return Outcome {
                next: vec![1.0, 1.0],
                reward: 1.0 - x,
                cont: 0.0,
                success: true,
            };
        }
        Outcome {
            next: vec![x2, 0.0],
            reward: dx,
            cont: 1.0,
            success: false,
        }
    }

    pub fn sample_state<R: Rng + ?Sized>(r: &mut R) -> Vec<f64> {
        vec![r.random_range(0.0..1.0), 0.0]
    }
}

fn absorbing(obs: &[f64]) -> Outcome {
    Outcome {
        next: obs.to_vec(),
        reward: 0.0,
        cont: 0.0,
        success: false,
    }
}
