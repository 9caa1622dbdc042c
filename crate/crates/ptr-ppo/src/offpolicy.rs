//! Importance-sampling machinery for replayed trajectories.
//!
//! Per-step policy ratios are multiplied backward into done-aware cumulative
//! ratios (the product restarts at every episode boundary within a segment),
//! then bounded by the truncated importance weight
//! `min(1 - eps, rho) + [(rho - (1 - eps)) / rho]_+`, whose first term caps
//! the weight and whose second term pushes very large weights back toward 1.

use thiserror::Error;

/// Per-step ratio clamp applied before cumulation so products stay finite.
pub const RATIO_CLAMP_MIN: f64 = 1e-4;
pub const RATIO_CLAMP_MAX: f64 = 1e4;

#[derive(Debug, Error, PartialEq)]
pub enum OffPolicyError {
    #[error("behavior probability must be positive, got {0}")]
    NonPositiveBehaviorProb(f64),
    #[error("input lengths differ: {0}")]
    LengthMismatch(String),
}

/// Step ratios, done-aware cumulative ratios, and their truncations for one
/// trajectory segment.
#[derive(Clone, Debug)]
pub struct RatioBatch {
    pub step_ratios: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub truncated: Vec<f64>,
}

/// `pi(a|s) / b(a|s)`, clamped into `[RATIO_CLAMP_MIN, RATIO_CLAMP_MAX]`.
pub fn step_ratio(current_prob: f64, behavior_prob: f64) -> Result<f64, OffPolicyError> {
    if behavior_prob <= 0.0 || !behavior_prob.is_finite() {
        return Err(OffPolicyError::NonPositiveBehaviorProb(behavior_prob));
    }
    Ok((current_prob / behavior_prob).clamp(RATIO_CLAMP_MIN, RATIO_CLAMP_MAX))
}

/// Done-aware cumulative ratio, computed backward:
/// `rho_t = ratio_t * (d_t + (1 - d_t) * rho_{t+1})` with the ratio beyond
/// the segment end taken as 1. Within an episode segment this equals the
/// plain product of the step ratios from `t` to the segment end.
pub fn cumulative_ratio(step_ratios: &[f64], dones: &[bool]) -> Result<Vec<f64>, OffPolicyError> {
    if step_ratios.len() != dones.len() {
        return Err(OffPolicyError::LengthMismatch(format!(
            "step_ratios {}, dones {}",
            step_ratios.len(),
            dones.len()
        )));
    }
    let mut out = vec![0.0; step_ratios.len()];
    let mut tail = 1.0;
    for t in (0..step_ratios.len()).rev() {
        let rho = if dones[t] {
            step_ratios[t]
        } else {
            step_ratios[t] * tail
        };
        out[t] = rho;
        tail = rho;
    }
    Ok(out)
}

/// Truncated importance weight:
/// `min(1 - eps_marg, rho) + [(rho - (1 - eps_marg)) / rho]_+`.
pub fn truncate(rho: f64, eps_marg: f64) -> f64 {
    let cap = 1.0 - eps_marg;
    let excess = (rho - cap) / rho;
    cap.min(rho) + excess.max(0.0)
}

/// `A^marg = rho^marg * A^done`, elementwise.
pub fn corrected_advantages(
    advantages_done: &[f64],
    truncated: &[f64],
) -> Result<Vec<f64>, OffPolicyError> {
    if advantages_done.len() != truncated.len() {
        return Err(OffPolicyError::LengthMismatch(format!(
            "advantages {}, truncated {}",
            advantages_done.len(),
            truncated.len()
        )));
    }
    Ok(advantages_done
        .iter()
        .zip(truncated)
        .map(|(a, r)| a * r)
        .collect())
}

/// Builds the full ratio pipeline for one segment.
pub fn ratio_batch(
    current_probs: &[f64],
    behavior_probs: &[f64],
    dones: &[bool],
    eps_marg: f64,
) -> Result<RatioBatch, OffPolicyError> {
    if current_probs.len() != behavior_probs.len() || current_probs.len() != dones.len() {
        return Err(OffPolicyError::LengthMismatch(format!(
            "current {}, behavior {}, dones {}",
            current_probs.len(),
            behavior_probs.len(),
            dones.len()
        )));
    }
    let step_ratios: Vec<f64> = current_probs
        .iter()
        .zip(behavior_probs)
        .map(|(&c, &b)| step_ratio(c, b))
        .collect::<Result<_, _>>()?;
    let cumulative = cumulative_ratio(&step_ratios, dones)?;
    let truncated = cumulative.iter().map(|&r| truncate(r, eps_marg)).collect();
    Ok(RatioBatch {
        step_ratios,
        cumulative,
        truncated,
    })
}
