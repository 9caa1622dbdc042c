use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{EnvError, Environment, Observation, StepResult};
use crate::rng::substream;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const POLE_HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * POLE_HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

/// Discrete cart-pole with the standard pole-balancing physics: push left or
/// right with a fixed force, reward 1.0 per step, episode ends when the cart
/// or pole leaves its threshold band or at the step limit. Initial state is
/// sampled uniformly from [-0.05, 0.05]^4.
pub struct CartPole {
    step_limit: u64,
    state: [f64; 4], // x, x_dot, theta, theta_dot
    steps: u64,
    awaiting_reset: bool,
    rng: ChaCha8Rng,
}

impl CartPole {
    pub const ACTIONS: usize = 2;

    pub fn new(seed: u64, step_limit: u64) -> Self {
        assert!(step_limit >= 1);
        Self {
            step_limit,
            state: [0.0; 4],
            steps: 0,
            awaiting_reset: false,
            rng: substream(seed, "cartpole"),
        }
    }

    fn observe(&self) -> Observation {
        Observation(self.state.to_vec())
    }
}

impl Environment for CartPole {
    fn name(&self) -> &'static str {
        "cartpole"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn action_count(&self) -> usize {
        Self::ACTIONS
    }

    fn reset(&mut self) -> Observation {
        for v in &mut self.state {
            *v = self.rng.random_range(-0.05..0.05);
        }
        self.steps = 0;
        self.awaiting_reset = false;
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        if action >= Self::ACTIONS {
            return Err(EnvError::InvalidAction {
                action,
                action_count: Self::ACTIONS,
            });
        }
        if self.awaiting_reset {
            return Err(EnvError::AwaitingReset);
        }
        let [mut x, mut x_dot, mut theta, mut theta_dot] = self.state;
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let cos_theta = theta.cos();
        let sin_theta = theta.sin();

        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin_theta) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin_theta - cos_theta * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_theta * cos_theta / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos_theta / TOTAL_MASS;

        // Semi-implicit-free Euler step, matching the classic control task.
        x += TAU * x_dot;
        x_dot += TAU * x_acc;
        theta += TAU * theta_dot;
        theta_dot += TAU * theta_acc;
        self.state = [x, x_dot, theta, theta_dot];
        self.steps += 1;

        let out_of_bounds = x.abs() > X_THRESHOLD || theta.abs() > THETA_THRESHOLD;
        let done = out_of_bounds || self.steps >= self.step_limit;
        self.awaiting_reset = done;
        Ok(StepResult {
            next_obs: self.observe(),
            reward: 1.0,
            done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_samples_within_bounds() {
        let mut env = CartPole::new(11, 200);
        for _ in 0..10_000 {
            let obs = env.reset();
            for &v in obs.values() {
                assert!((-0.05..0.05).contains(&v), "reset feature {v} out of range");
            }
        }
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let mut a = CartPole::new(42, 200);
        let mut b = CartPole::new(42, 200);
        assert_eq!(a.reset(), b.reset());
        for _ in 0..50 {
            let ra = a.step(1).unwrap();
            let rb = b.step(1).unwrap();
            assert_eq!(ra.next_obs, rb.next_obs);
            assert_eq!(ra.done, rb.done);
            if ra.done {
                assert_eq!(a.reset(), b.reset());
            }
        }
    }

    #[test]
    fn constant_push_eventually_terminates() {
        let mut env = CartPole::new(0, 500);
        env.reset();
        let mut steps = 0;
        loop {
            let r = env.step(1).unwrap();
            steps += 1;
            if r.done {
                break;
            }
            assert!(steps < 500, "pole should fall under a constant push");
        }
        assert!(steps < 200);
    }

    #[test]
    fn step_limit_truncation() {
        let mut env = CartPole::new(5, 3);
        env.reset();
        let mut done = false;
        for _ in 0..3 {
            done = env.step(env.steps as usize % 2).unwrap().done;
        }
        assert!(done);
    }
}
