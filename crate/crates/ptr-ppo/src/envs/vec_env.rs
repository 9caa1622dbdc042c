use super::{EnvError, Environment, Observation, StepResult};

/// Steps a set of independent environments in lockstep with automatic reset.
///
/// When an environment reports `done`, the returned `StepResult` keeps the
/// terminal transition, and the environment is reset immediately so its next
/// acting observation is an initial state. Results are always in env order.
pub struct VecEnv {
    envs: Vec<Box<dyn Environment>>,
    current_obs: Vec<Observation>,
    episode_steps: Vec<u64>,
    episode_returns: Vec<f64>,
    completed_returns: Vec<f64>,
}

impl VecEnv {
    pub fn new(mut envs: Vec<Box<dyn Environment>>) -> Self {
        assert!(!envs.is_empty(), "VecEnv needs at least one environment");
        let current_obs = envs.iter_mut().map(|e| e.reset()).collect();
        let n = envs.len();
        Self {
            envs,
            current_obs,
            episode_steps: vec![0; n],
            episode_returns: vec![0.0; n],
            completed_returns: Vec::new(),
        }
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.envs[0].obs_dim()
    }

    pub fn action_count(&self) -> usize {
        self.envs[0].action_count()
    }

    /// Observation each env is currently acting from.
    pub fn observations(&self) -> &[Observation] {
        &self.current_obs
    }

    /// Steps every env once. `actions` must have one entry per env.
    pub fn vec_step(&mut self, actions: &[usize]) -> Result<Vec<StepResult>, EnvError> {
        assert_eq!(actions.len(), self.envs.len(), "one action per env");
        let mut results = Vec::with_capacity(self.envs.len());
        for (i, env) in self.envs.iter_mut().enumerate() {
            let result = env.step(actions[i]).map_err(|e| EnvError::AtIndex {
                index: i,
                source: Box::new(e),
            })?;
            self.episode_steps[i] += 1;
            self.episode_returns[i] += result.reward;
            if result.done {
                self.completed_returns.push(self.episode_returns[i]);
                self.episode_returns[i] = 0.0;
                self.episode_steps[i] = 0;
                self.current_obs[i] = env.reset();
            } else {
                self.current_obs[i] = result.next_obs.clone();
            }
            results.push(result);
        }
        Ok(results)
    }

    /// Undiscounted returns of episodes completed since the last call.
    pub fn drain_completed_returns(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.completed_returns)
    }
}
