use std::f64::consts::PI;

use rand::Rng;

use super::Outcome;
use crate::action::ParamAction;

/// Drive a point to a goal with `n` actuators spread evenly around the circle.
///
/// Observation: `[agent_x, agent_y, goal_x, goal_y]`. Discrete action `k` is a
/// bit mask of active actuators; parameter `z_i` scales actuator `i`.
pub struct HardMove;

impl HardMove {
    pub const STATE_DIM: usize = 4;
    pub const MAX_STEPS: usize = 25;
    pub const STEP: f64 = 0.1;
    pub const GOAL_RADIUS: f64 = 0.1;
    pub const MIN_START_DIST: f64 = 0.5;
    pub const STEP_COST: f64 = 0.05;
    pub const GOAL_BONUS: f64 = 10.0;

    pub fn initial<R: Rng + ?Sized>(r: &mut R) -> Vec<f64> {
        loop {
            let gx: f64 = r.random_range(-1.0..=1.0);
            let gy: f64 = r.random_range(-1.0..=1.0);
            if gx.hypot(gy) >= Self::MIN_START_DIST {
                return vec![0.0, 0.0, gx, gy];
            }
        }
    }

    pub fn displacement(n: usize, a: &ParamAction) -> (f64, f64) {
        let scale = Self::STEP / (n as f64).sqrt();
        let (mut dx, mut dy) = (0.0, 0.0);
        for i in 0..n {
            if a.k >> i & 1 == 1 {
                let ang = 2.0 * PI * i as f64 / n as f64;
                dx += a.z[i] * ang.cos();
                dy += a.z[i] * ang.sin();
            }
        }
        (scale * dx, scale * dy)
    }

    pub fn dynamics(n: usize, obs: &[f64], a: &ParamAction) -> Outcome {
        let before = (obs[0] - obs[2]).hypot(obs[1] - obs[3]);
        if before < Self::GOAL_RADIUS {
            return Outcome {
                next: obs.to_vec(),
                reward: 0.0,
                cont: 0.0,
                success: false,
            };
        }
        let (dx, dy) = Self::displacement(n, a);
        let mut next = obs.to_vec();
        next[0] = (obs[0] + dx).clamp(-1.0, 1.0);
        next[1] = (obs[1] + dy).clamp(-1.0, 1.0);
        let after = (next[0] - next[2]).hypot(next[1] - next[3]);
        let mut reward = before - after - Self::STEP_COST;
        let reached = after < Self::GOAL_RADIUS;
        if reached {
            reward += Self::GOAL_BONUS;
        }
        Outcome {
            next,
            reward,
            cont: if reached { 0.0 } else { 1.0 },
            success: reached,
        }
    }

    pub fn sample_state<R: Rng + ?Sized>(r: &mut R) -> Vec<f64> {
        loop {
            let s: Vec<f64> = (0..4).map(|_| r.random_range(-1.0..=1.0)).collect();
            if (s[0] - s[2]).hypot(s[1] - s[3]) >= Self::GOAL_RADIUS {
                return s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvSpec;
    use crate::rng;

    #[test]
    fn reset_draws_goal_away_from_origin() {
        let spec = EnvSpec::hard_move(4).unwrap();
        for seed in 0..100 {
            let o = spec.reset(seed).observation;
            assert_eq!(&o[..2], &[0.0, 0.0]);
            assert!(o[2].hypot(o[3]) >= 0.5);
            assert!(o[2..].iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn empty_mask_only_pays_step_cost() {
        let o = HardMove::dynamics(4, &[0.2, 0.1, 0.9, 0.9], &ParamAction::new(0, vec![1.0; 4]));
        assert_eq!(&o.next[..2], &[0.2, 0.1]);
        assert!((o.reward + 0.05).abs() < 1e-12);
        assert_eq!(o.cont, 1.0);
    }

    #[test]
    fn single_actuator_moves_along_its_axis() {
        let o = HardMove::dynamics(
            4,
            &[0.0, 0.0, 0.9, 0.9],
            &ParamAction::new(1, vec![1.0, 0.3, -0.2, 0.5]),
        );
        assert!((o.next[0] - 0.05).abs() < 1e-12);
        assert!(o.next[1].abs() < 1e-12);
    }

    #[test]
    fn reaching_goal_pays_bonus_and_terminates() {
        let o = HardMove::dynamics(
            4,
            &[0.0, 0.0, 0.12, 0.0],
            &ParamAction::new(1, vec![1.0; 4]),
        );
        assert!(o.success);
        assert_eq!(o.cont, 0.0);
        let shaped = 0.12 - 0.07 - 0.05;
        assert!((o.reward - (shaped + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn shaped_rewards_telescope() {
        let spec = EnvSpec::hard_move(4).unwrap();
        let mut r = rng::stream(3, 0);
        for seed in 0..50 {
            let mut st = spec.reset(seed);
            let start = st.observation.clone();
            let mut total = 0.0;
            let mut steps = 0;
            let mut bonus = 0.0;
            while !st.done {
                let a = spec.random_action(&mut r);
                let (n, info) = spec.step(&st, &a).unwrap();
                total += info.reward;
                if info.success {
                    bonus += 10.0;
                }
                steps += 1;
                st = n;
            }
            let d = |o: &[f64]| (o[0] - o[2]).hypot(o[1] - o[3]);
            let potential = total - bonus + 0.05 * steps as f64;
            assert!((potential - (d(&start) - d(&st.observation))).abs() < 1e-9);
        }
    }
}
