//! Training objectives.
//!
//! The paper-facing objectives are stated as quantities to maximize; this
//! module minimizes their negation, so `total = value_loss + policy_loss -
//! beta * entropy` with the entropy bonus pushing toward exploration.
//!
//! Each loss returns its scalar (a batch mean) together with per-example
//! gradient signals on the policy logits and on the value output. TD targets
//! and importance ratios are treated as constants: no gradient flows through
//! them, and the finite-difference oracles hold them fixed accordingly.

/// Piecewise clip.
pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

/// One-step TD targets `r + gamma * (1 - d) * V(s')`.
pub fn td_targets(rewards: &[f64], next_values: &[f64], dones: &[bool], gamma: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), next_values.len());
    assert_eq!(rewards.len(), dones.len());
    (0..rewards.len())
        .map(|t| rewards[t] + gamma * if dones[t] { 0.0 } else { 1.0 } * next_values[t])
        .collect()
}

/// On-policy value loss: mean squared TD error, target constant.
/// Returns the loss and per-example `d loss_i / d value_i`.
pub fn value_loss_on(values: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(values.len(), targets.len());
    let mut loss = 0.0;
    let signals: Vec<f64> = values
        .iter()
        .zip(targets)
        .map(|(v, t)| {
            let err = v - t;
            loss += err * err;
            2.0 * err
        })
        .collect();
    (loss / values.len() as f64, signals)
}

/// Off-policy value loss: importance-ratio-weighted mean squared TD error.
/// The ratio is a constant weight; it scales the loss but carries no
/// gradient of its own.
pub fn value_loss_off(values: &[f64], targets: &[f64], ratios: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(values.len(), targets.len());
    assert_eq!(values.len(), ratios.len());
    let mut loss = 0.0;
    let signals: Vec<f64> = (0..values.len())
        .map(|i| {
            let err = values[i] - targets[i];
            loss += ratios[i] * err * err;
            2.0 * ratios[i] * err
        })
        .collect();
    (loss / values.len() as f64, signals)
}

/// Clipped policy surrogate:
/// `loss = -mean(min(r A, clip(r, 1 - eps, 1 + eps) A))` with
/// `r = pi(a|s) / prob_old(a|s)`.
///
/// Returns the loss and per-example logit signals. Where the clipped branch
/// is the strict minimum the surrogate is flat in `r` (the PPO dead zone)
/// and the signal is zero.
pub fn policy_loss_clipped(
    probs: &[Vec<f64>],
    actions: &[usize],
    prob_old: &[f64],
    advantages: &[f64],
    epsilon: f64,
) -> (f64, Vec<Vec<f64>>) {
    assert_eq!(probs.len(), actions.len());
    assert_eq!(probs.len(), prob_old.len());
    assert_eq!(probs.len(), advantages.len());
    let mut loss = 0.0;
    let mut signals = Vec::with_capacity(probs.len());
    for i in 0..probs.len() {
        let p = &probs[i];
        let a = actions[i];
        let adv = advantages[i];
        let ratio = p[a] / prob_old[i];
        let surr_unclipped = ratio * adv;
        let surr_clipped = clip(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv;
        let surrogate = surr_unclipped.min(surr_clipped);
        loss -= surrogate;
        // Gradient flows through the unclipped branch whenever it attains
        // the min; at a tie inside the clip band both branches agree.
        let pass = surr_unclipped <= surr_clipped;
        let mut signal = vec![0.0; p.len()];
        if pass {
            for (k, s) in signal.iter_mut().enumerate() {
                let indicator = if k == a { 1.0 } else { 0.0 };
                *s = -adv * ratio * (indicator - p[k]);
            }
        }
        signals.push(signal);
    }
    (loss / probs.len() as f64, signals)
}

/// Mean policy entropy and per-example `d H_i / d logits`.
pub fn entropy_bonus(probs: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let mut total = 0.0;
    let mut signals = Vec::with_capacity(probs.len());
    for p in probs {
        let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
        total += h;
        let signal = p
            .iter()
            .map(|&x| if x > 0.0 { -x * (x.ln() + h) } else { 0.0 })
            .collect();
        signals.push(signal);
    }
    (total / probs.len() as f64, signals)
}

/// Combined scalar objective `value_loss + policy_loss - beta * entropy`.
pub fn total_loss(value_loss: f64, policy_loss: f64, entropy: f64, beta: f64) -> f64 {
    value_loss + policy_loss - beta * entropy
}

/// Scalar losses plus the per-step gradient signals the approximator
/// consumes. With the default `value_coef = 1`,
/// `total = value_loss + policy_loss - beta * entropy` exactly.
#[derive(Clone, Debug)]
pub struct LossBreakdown {
    pub value_loss: f64,
    pub policy_loss: f64,
    pub entropy: f64,
    pub total: f64,
    pub logit_signals: Vec<Vec<f64>>,
    pub value_signals: Vec<f64>,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.value_loss.is_finite()
            && self.policy_loss.is_finite()
            && self.entropy.is_finite()
            && self.total.is_finite()
    }
}

/// Policy-side batch inputs for the combined loss.
pub struct PolicyBatch<'a> {
    pub probs: &'a [Vec<f64>],
    pub actions: &'a [usize],
    pub prob_old: &'a [f64],
    pub advantages: &'a [f64],
}

/// Assembles the full objective. `value_ratios = None` selects the
/// on-policy value loss; `Some(ratios)` the ratio-weighted one.
pub fn combined_loss(
    values: &[f64],
    targets: &[f64],
    value_ratios: Option<&[f64]>,
    policy: &PolicyBatch<'_>,
    epsilon: f64,
    beta: f64,
    value_coef: f64,
) -> LossBreakdown {
    let (value_loss, value_signals_raw) = match value_ratios {
        Some(ratios) => value_loss_off(values, targets, ratios),
        None => value_loss_on(values, targets),
    };
    let (policy_loss, policy_signals) = policy_loss_clipped(
        policy.probs,
        policy.actions,
        policy.prob_old,
        policy.advantages,
        epsilon,
    );
    let (entropy, entropy_signals) = entropy_bonus(policy.probs);

    let logit_signals: Vec<Vec<f64>> = policy_signals
        .into_iter()
        .zip(entropy_signals)
        .map(|(pol, ent)| {
            pol.into_iter()
                .zip(ent)
                .map(|(p, e)| p - beta * e)
                .collect()
        })
        .collect();
    let value_signals = value_signals_raw.into_iter().map(|s| value_coef * s).collect();

    LossBreakdown {
        value_loss,
        policy_loss,
        entropy,
        total: value_coef * value_loss + policy_loss - beta * entropy,
        logit_signals,
        value_signals,
    }
}

/// In-place per-batch advantage normalization (zero mean, unit std).
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean: f64 = advantages.iter().sum::<f64>() / n;
    let var: f64 = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages {
        *a = (*a - mean) / (std + 1e-8);
    }
}
