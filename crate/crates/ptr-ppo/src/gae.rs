//! Temporal-difference deltas and generalized advantage estimation with
//! done-masking, valid for rollout segments whose episode boundaries fall at
//! arbitrary positions.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GaeError {
    #[error("input lengths differ: {0}")]
    LengthMismatch(String),
    #[error("empty input")]
    Empty,
}

/// Per-step deltas, advantages, and return targets for one segment.
#[derive(Clone, Debug)]
pub struct AdvantageBatch {
    pub deltas: Vec<f64>,
    pub advantages: Vec<f64>,
    /// `A_t + V(s_t)`, the usual GAE value-regression target.
    pub value_targets: Vec<f64>,
}

/// `delta_t = r_t + gamma * (1 - d_t) * V(s_{t+1}) - V(s_t)`.
pub fn compute_deltas(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
) -> Result<Vec<f64>, GaeError> {
    if rewards.is_empty() {
        return Err(GaeError::Empty);
    }
    if rewards.len() != values.len()
        || rewards.len() != next_values.len()
        || rewards.len() != dones.len()
    {
        return Err(GaeError::LengthMismatch(format!(
            "rewards {}, values {}, next_values {}, dones {}",
            rewards.len(),
            values.len(),
            next_values.len(),
            dones.len()
        )));
    }
    Ok((0..rewards.len())
        .map(|t| {
            let mask = if dones[t] { 0.0 } else { 1.0 };
            rewards[t] + gamma * mask * next_values[t] - values[t]
        })
        .collect())
}

/// Backward recursion `A_t = delta_t + gamma * lambda * (1 - d_t) * A_{t+1}`,
/// with the advantage past the segment end taken as zero. Equivalent to the
/// per-episode-segment discounted double sum of the deltas.
pub fn compute_gae(
    deltas: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, GaeError> {
    if deltas.is_empty() {
        return Err(GaeError::Empty);
    }
    if deltas.len() != dones.len() {
        return Err(GaeError::LengthMismatch(format!(
            "deltas {}, dones {}",
            deltas.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; deltas.len()];
    let mut acc = 0.0;
    for t in (0..deltas.len()).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        acc = deltas[t] + gamma * lambda * mask * acc;
        advantages[t] = acc;
    }
    Ok(advantages)
}

/// Deltas, advantages and value targets in one pass.
pub fn advantage_batch(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<AdvantageBatch, GaeError> {
    let deltas = compute_deltas(rewards, values, next_values, dones, gamma)?;
    let advantages = compute_gae(&deltas, dones, gamma, lambda)?;
    let value_targets = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    Ok(AdvantageBatch {
        deltas,
        advantages,
        value_targets,
    })
}

/// Brute-force evaluation of the advantage as an explicit double loop over
/// each episode segment; the independent oracle for `compute_gae`.
pub fn gae_double_sum_oracle(deltas: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = deltas.len();
    let mut out = vec![0.0; n];
    for t in 0..n {
        let mut acc = 0.0;
        let mut weight = 1.0;
        for k in t..n {
            acc += weight * deltas[k];
            if dones[k] {
                break;
            }
            weight *= gamma * lambda;
        }
        out[t] = acc;
    }
    out
}
