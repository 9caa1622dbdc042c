use super::{EnvError, Environment, Observation, StepResult};

/// Sparse-reward gridworld: the agent starts in the top-left cell and only
/// reaching the bottom-right goal pays reward 1.0. Moves into a wall leave
/// the position unchanged. Hitting the step limit ends the episode with
/// `done = true` like a real termination.
pub struct GridWorld {
    size: usize,
    step_limit: u64,
    row: usize,
    col: usize,
    steps: u64,
    awaiting_reset: bool,
}

impl GridWorld {
    pub const ACTIONS: usize = 4; // up, down, left, right

    pub fn new(size: usize, step_limit: u64) -> Self {
        assert!(size >= 2, "gridworld needs at least 2x2 cells");
        assert!(step_limit >= 1);
        Self {
            size,
            step_limit,
            row: 0,
            col: 0,
            steps: 0,
            awaiting_reset: false,
        }
    }

    fn observe(&self) -> Observation {
        let mut v = vec![0.0; self.size * self.size];
        v[self.row * self.size + self.col] = 1.0;
        Observation(v)
    }

    fn at_goal(&self) -> bool {
        self.row == self.size - 1 && self.col == self.size - 1
    }
}

impl Environment for GridWorld {
    fn name(&self) -> &'static str {
        "gridworld"
    }

    fn obs_dim(&self) -> usize {
        self.size * self.size
    }

    fn action_count(&self) -> usize {
        Self::ACTIONS
    }

    fn reset(&mut self) -> Observation {
        self.row = 0;
        self.col = 0;
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
        match action {
            0 => self.row = self.row.saturating_sub(1),
            1 => self.row = (self.row + 1).min(self.size - 1),
            2 => self.col = self.col.saturating_sub(1),
            _ => self.col = (self.col + 1).min(self.size - 1),
        }
        self.steps += 1;
        let reached_goal = self.at_goal();
        let done = reached_goal || self.steps >= self.step_limit;
        self.awaiting_reset = done;
        Ok(StepResult {
            next_obs: self.observe(),
            reward: if reached_goal { 1.0 } else { 0.0 },
            done,
        })
    }
}
