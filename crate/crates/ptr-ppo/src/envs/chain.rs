use super::{EnvError, Environment, Observation, StepResult};

/// Chain MDP: states 0..length-1 on a line, starting at 0. Action 1 moves
/// right, action 0 moves left (both clamped at the ends). The only reward is
/// for pushing right while standing on the far end, which also terminates
/// the episode, so the reward signal is maximally sparse.
pub struct Chain {
    length: usize,
    step_limit: u64,
    state: usize,
    steps: u64,
    awaiting_reset: bool,
}

impl Chain {
    pub const ACTIONS: usize = 2; // left, right

    pub fn new(length: usize, step_limit: u64) -> Self {
        assert!(length >= 2, "chain needs at least 2 states");
        assert!(step_limit >= 1);
        Self {
            length,
            step_limit,
            state: 0,
            steps: 0,
            awaiting_reset: false,
        }
    }

    fn observe(&self) -> Observation {
        let mut v = vec![0.0; self.length];
        v[self.state] = 1.0;
        Observation(v)
    }
}

impl Environment for Chain {
    fn name(&self) -> &'static str {
        "chain"
    }

    fn obs_dim(&self) -> usize {
        self.length
    }

    fn action_count(&self) -> usize {
        Self::ACTIONS
    }

    fn reset(&mut self) -> Observation {
        self.state = 0;
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
        let at_far_end = self.state == self.length - 1;
        if action == 1 {
            self.state = (self.state + 1).min(self.length - 1);
        } else {
            self.state = self.state.saturating_sub(1);
        }
        self.steps += 1;
        let goal = at_far_end && action == 1;
        let done = goal || self.steps >= self.step_limit;
        self.awaiting_reset = done;
        Ok(StepResult {
            next_obs: self.observe(),
            reward: if goal { 1.0 } else { 0.0 },
            done,
        })
    }
}
