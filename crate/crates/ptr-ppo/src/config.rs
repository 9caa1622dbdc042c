//! Run configuration: a flat `key = value` text format with CLI overrides.
//!
//! Every knob a run needs lives here with its default. `to_config_text`
//! serializes in a fixed key order and `parse_config_text` reads it back, so
//! the config echoed into a run directory round-trips identically.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::envs::EnvSpec;
use crate::priority::PriorityScheme;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("config line {line} is not `key = value`: `{text}`")]
    Malformed { line: usize, text: String },
    #[error("config validation failed for `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("could not read config file: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvName {
    GridWorld,
    Chain,
    CartPole,
}

impl FromStr for EnvName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gridworld" => Ok(Self::GridWorld),
            "chain" => Ok(Self::Chain),
            "cartpole" => Ok(Self::CartPole),
            other => Err(format!(
                "unknown environment `{other}` (expected gridworld, chain, or cartpole)"
            )),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GridWorld => "gridworld",
            Self::Chain => "chain",
            Self::CartPole => "cartpole",
        })
    }
}

/// Algorithm presets for comparisons: the three priority schemes, plus the
/// vanilla baseline that never replays and instead repeats on-policy epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    PtrMax,
    PtrMean,
    PtrReward,
    Ppo,
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ptr-max" => Ok(Self::PtrMax),
            "ptr-mean" => Ok(Self::PtrMean),
            "ptr-reward" => Ok(Self::PtrReward),
            "ppo" => Ok(Self::Ppo),
            other => Err(format!(
                "unknown algorithm `{other}` (expected ptr-max, ptr-mean, ptr-reward, or ppo)"
            )),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PtrMax => "ptr-max",
            Self::PtrMean => "ptr-mean",
            Self::PtrReward => "ptr-reward",
            Self::Ppo => "ppo",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub env: EnvName,
    pub grid_size: usize,
    pub chain_length: usize,
    /// `None` picks the per-environment default (gridworld/chain 50,
    /// cartpole 200).
    pub step_limit: Option<u64>,
    pub num_envs: usize,
    pub rollout_len: usize,
    pub memory_capacity: usize,
    pub priority_scheme: PriorityScheme,
    pub alpha: f64,
    pub epsilon_p: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub clip_epsilon: f64,
    pub epsilon_marg: f64,
    pub beta: f64,
    pub value_loss_coef: f64,
    pub normalize_advantages: bool,
    pub n_on_policy_epochs: usize,
    pub n_off_policy_iters: usize,
    pub off_batch_trajectories: usize,
    pub max_iterations: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvName::GridWorld,
            grid_size: 5,
            chain_length: 10,
            step_limit: None,
            num_envs: 4,
            rollout_len: 8,
            memory_capacity: 256,
            priority_scheme: PriorityScheme::Mean,
            alpha: 0.6,
            epsilon_p: 1e-6,
            gamma: 0.99,
            lambda: 0.95,
            lr: 1e-4,
            clip_epsilon: 0.1,
            epsilon_marg: 0.2,
            beta: 0.001,
            value_loss_coef: 1.0,
            normalize_advantages: false,
            n_on_policy_epochs: 2,
            n_off_policy_iters: 8,
            off_batch_trajectories: 8,
            max_iterations: 1000,
            eval_interval: 2000,
            eval_episodes: 10,
            seed: 0,
        }
    }
}

const KEY_ORDER: [&str; 25] = [
    "env",
    "grid_size",
    "chain_length",
    "step_limit",
    "num_envs",
    "rollout_len",
    "memory_capacity",
    "priority_scheme",
    "alpha",
    "epsilon_p",
    "gamma",
    "lambda",
    "lr",
    "clip_epsilon",
    "epsilon_marg",
    "beta",
    "value_loss_coef",
    "normalize_advantages",
    "n_on_policy_epochs",
    "n_off_policy_iters",
    "off_batch_trajectories",
    "max_iterations",
    "eval_interval",
    "eval_episodes",
    "seed",
];

fn parse_as<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        message: format!("{e}"),
    })
}

impl TrainConfig {
    /// Applies one `key = value` override.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "env" => self.env = parse_as(key, value)?,
            "grid_size" => self.grid_size = parse_as(key, value)?,
            "chain_length" => self.chain_length = parse_as(key, value)?,
            "step_limit" => {
                self.step_limit = if value == "default" {
                    None
                } else {
                    Some(parse_as(key, value)?)
                }
            }
            "num_envs" => self.num_envs = parse_as(key, value)?,
            "rollout_len" => self.rollout_len = parse_as(key, value)?,
            "memory_capacity" => self.memory_capacity = parse_as(key, value)?,
            "priority_scheme" => {
                self.priority_scheme =
                    value
                        .parse::<PriorityScheme>()
                        .map_err(|e| ConfigError::InvalidValue {
                            key: key.to_string(),
                            message: e,
                        })?
            }
            "alpha" => self.alpha = parse_as(key, value)?,
            "epsilon_p" => self.epsilon_p = parse_as(key, value)?,
            "gamma" => self.gamma = parse_as(key, value)?,
            "lambda" => self.lambda = parse_as(key, value)?,
            "lr" => self.lr = parse_as(key, value)?,
            "clip_epsilon" => self.clip_epsilon = parse_as(key, value)?,
            "epsilon_marg" => self.epsilon_marg = parse_as(key, value)?,
            "beta" => self.beta = parse_as(key, value)?,
            "value_loss_coef" => self.value_loss_coef = parse_as(key, value)?,
            "normalize_advantages" => self.normalize_advantages = parse_as(key, value)?,
            "n_on_policy_epochs" => self.n_on_policy_epochs = parse_as(key, value)?,
            "n_off_policy_iters" => self.n_off_policy_iters = parse_as(key, value)?,
            "off_batch_trajectories" => self.off_batch_trajectories = parse_as(key, value)?,
            "max_iterations" => self.max_iterations = parse_as(key, value)?,
            "eval_interval" => self.eval_interval = parse_as(key, value)?,
            "eval_episodes" => self.eval_episodes = parse_as(key, value)?,
            "seed" => self.seed = parse_as(key, value)?,
            // Reserved: only the shipped truncation form is available.
            "alt_truncation" => {
                if value != "off" {
                    return Err(ConfigError::InvalidValue {
                        key: key.to_string(),
                        message: "only `off` is supported".to_string(),
                    });
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    fn kv(&self, key: &str) -> String {
        match key {
            "env" => self.env.to_string(),
            "grid_size" => self.grid_size.to_string(),
            "chain_length" => self.chain_length.to_string(),
            "step_limit" => self
                .step_limit
                .map_or_else(|| "default".to_string(), |v| v.to_string()),
            "num_envs" => self.num_envs.to_string(),
            "rollout_len" => self.rollout_len.to_string(),
            "memory_capacity" => self.memory_capacity.to_string(),
            "priority_scheme" => self.priority_scheme.to_string(),
            "alpha" => self.alpha.to_string(),
            "epsilon_p" => self.epsilon_p.to_string(),
            "gamma" => self.gamma.to_string(),
            "lambda" => self.lambda.to_string(),
            "lr" => self.lr.to_string(),
            "clip_epsilon" => self.clip_epsilon.to_string(),
            "epsilon_marg" => self.epsilon_marg.to_string(),
            "beta" => self.beta.to_string(),
            "value_loss_coef" => self.value_loss_coef.to_string(),
            "normalize_advantages" => self.normalize_advantages.to_string(),
            "n_on_policy_epochs" => self.n_on_policy_epochs.to_string(),
            "n_off_policy_iters" => self.n_off_policy_iters.to_string(),
            "off_batch_trajectories" => self.off_batch_trajectories.to_string(),
            "max_iterations" => self.max_iterations.to_string(),
            "eval_interval" => self.eval_interval.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "seed" => self.seed.to_string(),
            _ => unreachable!("kv called with unknown key"),
        }
    }

    /// Canonical serialization: fixed key order, one `key = value` per line.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for key in KEY_ORDER {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.kv(key));
            out.push('\n');
        }
        out
    }

    pub fn parse_config_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: i + 1,
                text: raw.to_string(),
            })?;
            cfg.apply_kv(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{path:?}: {e}")))?;
        let cfg = Self::parse_config_text(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Switches scheme and phase counts to an algorithm preset. The vanilla
    /// baseline repeats on-policy training instead of replaying.
    pub fn apply_algorithm(&mut self, alg: Algorithm) {
        match alg {
            Algorithm::PtrMax => {
                self.priority_scheme = PriorityScheme::Max;
            }
            Algorithm::PtrMean => {
                self.priority_scheme = PriorityScheme::Mean;
            }
            Algorithm::PtrReward => {
                self.priority_scheme = PriorityScheme::Reward;
            }
            Algorithm::Ppo => {
                self.n_off_policy_iters = 0;
                self.n_on_policy_epochs = 10;
            }
        }
    }

    pub fn env_spec(&self) -> EnvSpec {
        match self.env {
            EnvName::GridWorld => EnvSpec::GridWorld {
                size: self.grid_size,
                step_limit: self.step_limit.unwrap_or(50),
            },
            EnvName::Chain => EnvSpec::Chain {
                length: self.chain_length,
                step_limit: self.step_limit.unwrap_or(50),
            },
            EnvName::CartPole => EnvSpec::CartPole {
                step_limit: self.step_limit.unwrap_or(200),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |key: &str, message: &str| {
            Err(ConfigError::Validation {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        if self.grid_size < 2 {
            return fail("grid_size", "must be at least 2");
        }
        if self.chain_length < 2 {
            return fail("chain_length", "must be at least 2");
        }
        if self.step_limit == Some(0) {
            return fail("step_limit", "must be positive");
        }
        if self.num_envs == 0 {
            return fail("num_envs", "must be at least 1");
        }
        if self.rollout_len < 2 {
            return fail("rollout_len", "must be at least 2");
        }
        if !self.memory_capacity.is_power_of_two() {
            return fail("memory_capacity", "must be a power of two");
        }
        if self.memory_capacity < self.off_batch_trajectories {
            return fail(
                "memory_capacity",
                "must be at least off_batch_trajectories",
            );
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return fail("alpha", "must be a finite nonnegative number");
        }
        if self.epsilon_p <= 0.0 {
            return fail("epsilon_p", "must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma", "must be in (0, 1]");
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return fail("lambda", "must be in (0, 1]");
        }
        if self.lr <= 0.0 {
            return fail("lr", "must be positive");
        }
        if self.clip_epsilon <= 0.0 || self.clip_epsilon >= 1.0 {
            return fail("clip_epsilon", "must be in (0, 1)");
        }
        if self.epsilon_marg <= 0.0 || self.epsilon_marg >= 1.0 {
            return fail("epsilon_marg", "must be in (0, 1)");
        }
        if self.beta < 0.0 {
            return fail("beta", "must be nonnegative");
        }
        if self.value_loss_coef <= 0.0 {
            return fail("value_loss_coef", "must be positive");
        }
        if self.n_on_policy_epochs == 0 {
            return fail("n_on_policy_epochs", "must be at least 1");
        }
        if self.off_batch_trajectories == 0 {
            return fail("off_batch_trajectories", "must be at least 1");
        }
        if self.eval_interval == 0 {
            return fail("eval_interval", "must be positive");
        }
        if self.eval_episodes == 0 {
            return fail("eval_episodes", "must be at least 1");
        }
        Ok(())
    }
}
