//! Small discrete-action environments and a vectorized runner.
//!
//! All observations are flat `f64` feature vectors. Episode ends (true
//! termination and step-limit truncation alike) set `done = true`; the
//! vectorized runner resets a finished environment immediately so rollout
//! segments of fixed length can carry `done` flags at arbitrary positions.

mod cartpole;
mod chain;
mod gridworld;
mod vec_env;

pub use cartpole::CartPole;
pub use chain::Chain;
pub use gridworld::GridWorld;
pub use vec_env::VecEnv;

use thiserror::Error;

/// One observation: a fixed-length vector of finite features.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Result of a single environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_obs: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("action {action} out of range for {action_count}-action environment")]
    InvalidAction { action: usize, action_count: usize },
    #[error("environment finished an episode and is awaiting reset")]
    AwaitingReset,
    #[error("env {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<EnvError>,
    },
}

/// A single-owner discrete-action environment.
pub trait Environment: Send + Sync {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Puts the environment in an initial state and returns its observation.
    fn reset(&mut self) -> Observation;
    /// Advances one step. Errors on out-of-range actions and on stepping a
    /// finished episode before `reset`.
    fn step(&mut self, action: usize) -> Result<StepResult, EnvError>;
}

/// Environment selection, as named in run configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvSpec {
    GridWorld { size: usize, step_limit: u64 },
    Chain { length: usize, step_limit: u64 },
    CartPole { step_limit: u64 },
}

impl EnvSpec {
    /// Builds a fresh instance; `seed` feeds the env's own RNG where one is
    /// needed (CartPole initial-state sampling).
    pub fn build(&self, seed: u64) -> Box<dyn Environment> {
        match *self {
            EnvSpec::GridWorld { size, step_limit } => Box::new(GridWorld::new(size, step_limit)),
            EnvSpec::Chain { length, step_limit } => Box::new(Chain::new(length, step_limit)),
            EnvSpec::CartPole { step_limit } => Box::new(CartPole::new(seed, step_limit)),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match *self {
            EnvSpec::GridWorld { size, .. } => size * size,
            EnvSpec::Chain { length, .. } => length,
            EnvSpec::CartPole { .. } => 4,
        }
    }

    pub fn action_count(&self) -> usize {
        match *self {
            EnvSpec::GridWorld { .. } => 4,
            EnvSpec::Chain { .. } => 2,
            EnvSpec::CartPole { .. } => 2,
        }
    }

    /// Best undiscounted episode return achievable, used as the reference
    /// point for evaluation thresholds.
    pub fn optimal_return(&self) -> f64 {
        match *self {
            EnvSpec::GridWorld { .. } | EnvSpec::Chain { .. } => 1.0,
            EnvSpec::CartPole { step_limit } => step_limit as f64,
        }
    }
}
