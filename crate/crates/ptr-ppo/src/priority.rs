//! Trajectory priority measures.
//!
//! Three schemes rank a stored trajectory for replay: the max or mean of its
//! absolute done-masked GAE advantages, or its undiscounted segment return
//! normalized by running statistics over all returns seen so far. Every
//! scheme adds a small positive floor so no stored trajectory ever has zero
//! sampling probability.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Default priority floor (`epsilon_p`).
pub const PRIORITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PriorityError {
    #[error("empty advantage sequence")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorityScheme {
    Max,
    Mean,
    Reward,
}

impl FromStr for PriorityScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "reward" => Ok(Self::Reward),
            other => Err(format!(
                "unknown priority scheme `{other}` (expected max, mean, or reward)"
            )),
        }
    }
}

impl fmt::Display for PriorityScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Max => "max",
            Self::Mean => "mean",
            Self::Reward => "reward",
        })
    }
}

/// A strictly positive trajectory priority and the scheme that produced it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPriority {
    pub value: f64,
    pub scheme: PriorityScheme,
}

/// Running count, mean and sum of squared deviations (Welford) over the
/// undiscounted returns of all trajectories ever inserted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunningReturnStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningReturnStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// One Welford step.
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation; zero until two returns are seen.
    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / self.count as f64).sqrt()
        }
    }
}

/// Max of the absolute advantages, plus the floor.
pub fn max_priority(advantages: &[f64], eps_p: f64) -> Result<TrajectoryPriority, PriorityError> {
    if advantages.is_empty() {
        return Err(PriorityError::Empty);
    }
    let value = advantages.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    Ok(TrajectoryPriority {
        value: value + eps_p,
        scheme: PriorityScheme::Max,
    })
}

/// Mean of the absolute advantages, plus the floor.
pub fn mean_priority(advantages: &[f64], eps_p: f64) -> Result<TrajectoryPriority, PriorityError> {
    if advantages.is_empty() {
        return Err(PriorityError::Empty);
    }
    let value = advantages.iter().map(|a| a.abs()).sum::<f64>() / advantages.len() as f64;
    Ok(TrajectoryPriority {
        value: value + eps_p,
        scheme: PriorityScheme::Mean,
    })
}

/// Normalized-return priority `|(R - mean) / std| + eps_p`.
///
/// The running statistics are advanced only when the trajectory first enters
/// the memory; recomputation on a priority refresh reads the current
/// statistics without touching them. While the standard deviation is
/// undefined or zero the trajectory gets "average novelty" `eps_p + 1`.
pub fn reward_priority(
    undiscounted_return: f64,
    stats: &mut RunningReturnStats,
    first_insertion: bool,
    eps_p: f64,
) -> TrajectoryPriority {
    if first_insertion {
        stats.push(undiscounted_return);
    }
    let sigma = stats.std();
    let value = if stats.count() < 2 || sigma == 0.0 {
        eps_p + 1.0
    } else {
        ((undiscounted_return - stats.mean()) / sigma).abs() + eps_p
    };
    TrajectoryPriority {
        value,
        scheme: PriorityScheme::Reward,
    }
}
