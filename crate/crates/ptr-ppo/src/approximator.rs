//! Shared-parameter policy/value function approximator.
//!
//! A small fully-connected network with a common tanh trunk and two heads:
//! softmax action probabilities and a scalar state value. Gradients are
//! derived by hand and verified against central finite differences (see the
//! loss modules and the acceptance suite), so everything is kept in `f64`.
//!
//! The backward pass starts from *logit-space* and *value-output* signals:
//! the loss functions own the softmax Jacobian, this module owns the rest of
//! the chain rule down to the weights.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::envs::Observation;

/// Default hidden-layer widths for training runs.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Error, PartialEq)]
pub enum ApproxError {
    #[error("observation dimension {got} does not match network input {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("gradient signal shape mismatch: {0}")]
    SignalShape(String),
    #[error("non-finite gradient; update rejected ({0})")]
    NonFiniteGradient(String),
}

/// Dense layer computing `z = W x + b`, with `w` stored row-major
/// (`rows` outputs by `cols` inputs).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.cols);
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            out.push(acc);
        }
    }

    fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite()) && self.b.iter().all(|v| v.is_finite())
    }
}

/// Shared parameters of the softmax policy head and scalar value head.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValueParams {
    pub obs_dim: usize,
    pub action_count: usize,
    pub hidden: [usize; 2],
    /// trunk1, trunk2, policy head, value head.
    pub layers: [Layer; 4],
}

/// Immutable deep copy of the parameters at backup time.
#[derive(Clone, Debug)]
pub struct PolicySnapshot {
    params: PolicyValueParams,
}

impl PolicySnapshot {
    pub fn params(&self) -> &PolicyValueParams {
        &self.params
    }

    pub fn forward(&self, obs: &Observation) -> Result<ForwardResult, ApproxError> {
        self.params.forward(obs)
    }
}

/// Output of one forward pass plus the activations needed for backprop.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    pub action_probs: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
}

/// Per-example backward input: the cached forward pass and the loss
/// derivatives with respect to the policy logits and the value output.
pub struct BackwardItem<'a> {
    pub forward: &'a ForwardResult,
    pub logit_signal: &'a [f64],
    pub value_signal: f64,
}

/// Parameter-shaped gradient (mean over the batch handed to `backward`).
#[derive(Clone, Debug)]
pub struct Gradient {
    pub layers: [Layer; 4],
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] avoids ln(0).
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Orthogonal-style init: Gram-Schmidt on a Gaussian matrix, scaled by `gain`.
fn orthogonal_layer(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Layer {
    let mut w = vec![0.0; rows * cols];
    for v in &mut w {
        *v = standard_normal(rng);
    }
    // Orthonormalize along the shorter side.
    let (vectors, dim) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors);
    for i in 0..vectors {
        let mut v: Vec<f64> = (0..dim)
            .map(|j| {
                if rows <= cols {
                    w[i * cols + j]
                } else {
                    w[j * cols + i]
                }
            })
            .collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vj, uj) in v.iter_mut().zip(u) {
                *vj -= dot * uj;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in &mut v {
                *x /= norm;
            }
        }
        basis.push(v);
    }
    for (i, v) in basis.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            if rows <= cols {
                w[i * cols + j] = gain * x;
            } else {
                w[j * cols + i] = gain * x;
            }
        }
    }
    Layer {
        rows,
        cols,
        w,
        b: vec![0.0; rows],
    }
}

impl PolicyValueParams {
    /// Fresh network: tanh trunk with orthogonal-style scaled init, small
    /// policy head, unit value head.
    pub fn init(obs_dim: usize, action_count: usize, hidden: [usize; 2], rng: &mut ChaCha8Rng) -> Self {
        assert!(obs_dim >= 1 && action_count >= 2);
        let sqrt2 = std::f64::consts::SQRT_2;
        Self {
            obs_dim,
            action_count,
            hidden,
            layers: [
                orthogonal_layer(hidden[0], obs_dim, sqrt2, rng),
                orthogonal_layer(hidden[1], hidden[0], sqrt2, rng),
                orthogonal_layer(action_count, hidden[1], 0.01, rng),
                orthogonal_layer(1, hidden[1], 1.0, rng),
            ],
        }
    }

    /// All-zero network; softmax of zero logits is the uniform policy.
    pub fn zeros(obs_dim: usize, action_count: usize, hidden: [usize; 2]) -> Self {
        Self {
            obs_dim,
            action_count,
            hidden,
            layers: [
                Layer::zeros(hidden[0], obs_dim),
                Layer::zeros(hidden[1], hidden[0]),
                Layer::zeros(action_count, hidden[1]),
                Layer::zeros(1, hidden[1]),
            ],
        }
    }

    pub fn forward(&self, obs: &Observation) -> Result<ForwardResult, ApproxError> {
        let x = obs.values();
        if x.len() != self.obs_dim {
            return Err(ApproxError::DimMismatch {
                expected: self.obs_dim,
                got: x.len(),
            });
        }
        let mut z = Vec::new();
        self.layers[0].forward(x, &mut z);
        let h1: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
        self.layers[1].forward(&h1, &mut z);
        let h2: Vec<f64> = z.iter().map(|v| v.tanh()).collect();
        let mut logits = Vec::new();
        self.layers[2].forward(&h2, &mut logits);
        let mut value_out = Vec::new();
        self.layers[3].forward(&h2, &mut value_out);

        let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max_logit).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let action_probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();

        Ok(ForwardResult {
            action_probs,
            logits,
            value: value_out[0],
            input: x.to_vec(),
            h1,
            h2,
        })
    }

    /// Mean gradient over the batch. Signals are `d loss_i / d logits` and
    /// `d loss_i / d value` for each example; the batch loss is the mean of
    /// the per-example losses.
    pub fn backward(&self, batch: &[BackwardItem<'_>]) -> Result<Gradient, ApproxError> {
        if batch.is_empty() {
            return Err(ApproxError::SignalShape("empty batch".into()));
        }
        let mut grad = Gradient {
            layers: [
                Layer::zeros(self.layers[0].rows, self.layers[0].cols),
                Layer::zeros(self.layers[1].rows, self.layers[1].cols),
                Layer::zeros(self.layers[2].rows, self.layers[2].cols),
                Layer::zeros(self.layers[3].rows, self.layers[3].cols),
            ],
        };
        let h2_dim = self.hidden[1];
        let h1_dim = self.hidden[0];
        for item in batch {
            let fw = item.forward;
            if item.logit_signal.len() != self.action_count {
                return Err(ApproxError::SignalShape(format!(
                    "logit signal length {} != action count {}",
                    item.logit_signal.len(),
                    self.action_count
                )));
            }
            if fw.input.len() != self.obs_dim {
                return Err(ApproxError::SignalShape(
                    "cached input does not match network".into(),
                ));
            }

            // Heads.
            let g_logits = item.logit_signal;
            let g_value = item.value_signal;
            let mut g_h2 = vec![0.0; h2_dim];
            {
                let policy = &self.layers[2];
                for r in 0..policy.rows {
                    let gr = g_logits[r];
                    let row = &policy.w[r * policy.cols..(r + 1) * policy.cols];
                    for (j, wv) in row.iter().enumerate() {
                        g_h2[j] += wv * gr;
                    }
                    let grow = &mut grad.layers[2].w[r * policy.cols..(r + 1) * policy.cols];
                    for (j, g) in grow.iter_mut().enumerate() {
                        *g += gr * fw.h2[j];
                    }
                    grad.layers[2].b[r] += gr;
                }
                let value = &self.layers[3];
                for (j, wv) in value.w.iter().enumerate() {
                    g_h2[j] += wv * g_value;
                    grad.layers[3].w[j] += g_value * fw.h2[j];
                }
                grad.layers[3].b[0] += g_value;
            }

            // Trunk layer 2.
            let mut g_h1 = vec![0.0; h1_dim];
            {
                let l = &self.layers[1];
                for r in 0..l.rows {
                    let gz = g_h2[r] * (1.0 - fw.h2[r] * fw.h2[r]);
                    let row = &l.w[r * l.cols..(r + 1) * l.cols];
                    for (j, wv) in row.iter().enumerate() {
                        g_h1[j] += wv * gz;
                    }
                    let grow = &mut grad.layers[1].w[r * l.cols..(r + 1) * l.cols];
                    for (j, g) in grow.iter_mut().enumerate() {
                        *g += gz * fw.h1[j];
                    }
                    grad.layers[1].b[r] += gz;
                }
            }

            // Trunk layer 1.
            {
                let l = &self.layers[0];
                for r in 0..l.rows {
                    let gz = g_h1[r] * (1.0 - fw.h1[r] * fw.h1[r]);
                    let grow = &mut grad.layers[0].w[r * l.cols..(r + 1) * l.cols];
                    for (j, g) in grow.iter_mut().enumerate() {
                        *g += gz * fw.input[j];
                    }
                    grad.layers[0].b[r] += gz;
                }
            }
        }
        let inv_n = 1.0 / batch.len() as f64;
        for layer in &mut grad.layers {
            for v in &mut layer.w {
                *v *= inv_n;
            }
            for v in &mut layer.b {
                *v *= inv_n;
            }
        }
        Ok(grad)
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            params: self.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flattened view used by finite-difference checks.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.param_count());
        let mut i = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&values[i..i + nw]);
            i += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&values[i..i + nb]);
            i += nb;
        }
    }
}

impl Gradient {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }
}

/// Samples an action from the forward result and returns it with its
/// behavior probability, which is stored alongside the transition.
pub fn sample_action(result: &ForwardResult, rng: &mut ChaCha8Rng) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (a, &p) in result.action_probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return (a, p);
        }
    }
    let last = result.action_probs.len() - 1;
    (last, result.action_probs[last])
}

/// Adam optimizer state for one parameter set.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(lr: f64, params: &PolicyValueParams) -> Self {
        let n = params.param_count();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update. Rejects non-finite gradients, leaving both the
/// parameters and the optimizer state untouched.
pub fn apply_update(
    params: &mut PolicyValueParams,
    grad: &Gradient,
    opt: &mut AdamState,
) -> Result<(), ApproxError> {
    if !grad.is_finite() {
        return Err(ApproxError::NonFiniteGradient(
            "gradient contains NaN or infinity".into(),
        ));
    }
    let g = grad.flat();
    let mut theta = params.flat();
    if g.len() != theta.len() {
        return Err(ApproxError::SignalShape(format!(
            "gradient has {} entries, parameters {}",
            g.len(),
            theta.len()
        )));
    }
    opt.step += 1;
    let t = opt.step as f64;
    let bc1 = 1.0 - opt.beta1.powf(t);
    let bc2 = 1.0 - opt.beta2.powf(t);
    for i in 0..g.len() {
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g[i];
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g[i] * g[i];
        let m_hat = opt.m[i] / bc1;
        let v_hat = opt.v[i] / bc2;
        theta[i] -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
    }
    params.set_flat(&theta);
    Ok(())
}

// --- checkpoint io -----------------------------------------------------

const CHECKPOINT_MAGIC: &str = "ptrppo-params v1";
const LAYER_NAMES: [&str; 4] = ["trunk1", "trunk2", "policy_head", "value_head"];

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Writes the parameters as a plain-text checkpoint: a shape header followed
/// by one row of row-major values per line. `f64` display round-trips
/// exactly, so save/load is lossless.
pub fn save_checkpoint(
    params: &PolicyValueParams,
    path: &std::path::Path,
) -> Result<(), CheckpointError> {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "obs_dim {}", params.obs_dim);
    let _ = writeln!(out, "action_count {}", params.action_count);
    let _ = writeln!(out, "hidden {} {}", params.hidden[0], params.hidden[1]);
    for (layer, name) in params.layers.iter().zip(LAYER_NAMES) {
        let _ = writeln!(out, "layer {name} {} {}", layer.rows, layer.cols);
        for r in 0..layer.rows {
            let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        let line: Vec<String> = layer.b.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "bias {}", line.join(" "));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<PolicyValueParams, CheckpointError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |msg: &str| CheckpointError::Malformed(msg.to_string());
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("missing header"));
    }
    let mut field = |name: &str| -> Result<Vec<usize>, CheckpointError> {
        let line = lines.next().ok_or_else(|| bad("truncated header"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(bad(&format!("expected `{name}` line")));
        }
        parts
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| bad(&format!("bad integer in `{name}`")))
            })
            .collect()
    };
    let obs_dim = field("obs_dim")?[0];
    let action_count = field("action_count")?[0];
    let hidden_v = field("hidden")?;
    if hidden_v.len() != 2 {
        return Err(bad("hidden must list two widths"));
    }
    let hidden = [hidden_v[0], hidden_v[1]];

    let mut params = PolicyValueParams::zeros(obs_dim, action_count, hidden);
    for (idx, name) in LAYER_NAMES.iter().enumerate() {
        let header = lines.next().ok_or_else(|| bad("truncated layers"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "layer" || parts[1] != *name {
            return Err(bad(&format!("expected `layer {name}` header")));
        }
        let rows: usize = parts[2].parse().map_err(|_| bad("bad row count"))?;
        let cols: usize = parts[3].parse().map_err(|_| bad("bad col count"))?;
        if rows != params.layers[idx].rows || cols != params.layers[idx].cols {
            return Err(bad(&format!("layer {name} shape mismatch")));
        }
        for r in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated weights"))?;
            let values: Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let values = values.map_err(|_| bad("bad weight value"))?;
            if values.len() != cols {
                return Err(bad(&format!("layer {name} row {r} has wrong width")));
            }
            params.layers[idx].w[r * cols..(r + 1) * cols].copy_from_slice(&values);
        }
        let line = lines.next().ok_or_else(|| bad("truncated bias"))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some("bias") {
            return Err(bad("expected bias line"));
        }
        let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
        let values = values.map_err(|_| bad("bad bias value"))?;
        if values.len() != rows {
            return Err(bad(&format!("layer {name} bias has wrong width")));
        }
        params.layers[idx].b.copy_from_slice(&values);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn obs(values: &[f64]) -> Observation {
        Observation(values.to_vec())
    }

    #[test]
    fn zero_network_is_uniform() {
        let params = PolicyValueParams::zeros(3, 4, [8, 8]);
        let fw = params.forward(&obs(&[0.3, -0.2, 1.0])).unwrap();
        for &p in &fw.action_probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
        assert_eq!(fw.value, 0.0);
    }

    #[test]
    fn probs_are_a_simplex_over_random_draws() {
        let mut rng = substream(5, "approx-test");
        for _ in 0..1000 {
            let params = PolicyValueParams::init(4, 3, [6, 5], &mut rng);
            let x: Vec<f64> = (0..4).map(|_| standard_normal(&mut rng)).collect();
            let fw = params.forward(&obs(&x)).unwrap();
            let sum: f64 = fw.action_probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "probs sum {sum}");
            assert!(fw.action_probs.iter().all(|&p| p >= 0.0));
            assert!(fw.value.is_finite());
        }
    }

    #[test]
    fn dim_mismatch_is_an_error() {
        let params = PolicyValueParams::zeros(3, 2, [4, 4]);
        assert_eq!(
            params.forward(&obs(&[1.0, 2.0])),
            Err(ApproxError::DimMismatch {
                expected: 3,
                got: 2
            })
        );
    }

    #[test]
    fn degenerate_distribution_always_picks_it() {
        let fw = ForwardResult {
            action_probs: vec![1.0, 0.0, 0.0, 0.0],
            logits: vec![0.0; 4],
            value: 0.0,
            input: vec![],
            h1: vec![],
            h2: vec![],
        };
        let mut rng = substream(0, "sample");
        for _ in 0..100 {
            let (a, p) = sample_action(&fw, &mut rng);
            assert_eq!(a, 0);
            assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let fw = ForwardResult {
            action_probs: vec![0.25; 4],
            logits: vec![0.0; 4],
            value: 0.0,
            input: vec![],
            h1: vec![],
            h2: vec![],
        };
        let mut rng = substream(7, "sample-freq");
        let n = 100_000;
        let mut counts = [0u32; 4];
        for _ in 0..n {
            counts[sample_action(&fw, &mut rng).0] += 1;
        }
        for c in counts {
            let freq = f64::from(c) / n as f64;
            assert!((freq - 0.25).abs() < 0.01, "frequency {freq}");
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let fw = ForwardResult {
            action_probs: vec![0.7, 0.3],
            logits: vec![0.0; 2],
            value: 0.0,
            input: vec![],
            h1: vec![],
            h2: vec![],
        };
        let run = |seed| -> Vec<usize> {
            let mut rng = substream(seed, "repro");
            (0..32).map(|_| sample_action(&fw, &mut rng).0).collect()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn zero_signal_zero_gradient() {
        let mut rng = substream(1, "zero-sig");
        let params = PolicyValueParams::init(3, 2, [4, 4], &mut rng);
        let fw = params.forward(&obs(&[0.1, 0.2, 0.3])).unwrap();
        let grad = params
            .backward(&[BackwardItem {
                forward: &fw,
                logit_signal: &[0.0, 0.0],
                value_signal: 0.0,
            }])
            .unwrap();
        assert!(grad.flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn batch_of_identical_examples_matches_single() {
        let mut rng = substream(2, "batch-mean");
        let params = PolicyValueParams::init(3, 2, [4, 4], &mut rng);
        let fw = params.forward(&obs(&[0.5, -0.5, 0.25])).unwrap();
        let signal = [0.3, -0.7];
        let single = params
            .backward(&[BackwardItem {
                forward: &fw,
                logit_signal: &signal,
                value_signal: 0.9,
            }])
            .unwrap();
        let batch: Vec<BackwardItem> = (0..5)
            .map(|_| BackwardItem {
                forward: &fw,
                logit_signal: &signal,
                value_signal: 0.9,
            })
            .collect();
        let multi = params.backward(&batch).unwrap();
        for (a, b) in single.flat().iter().zip(multi.flat()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_linear_loss() {
        // Loss linear in (logits, value) makes the fixed signals exact:
        // L = sum(c .* logits) + g * value.
        let mut rng = substream(3, "fd");
        let params = PolicyValueParams::init(4, 3, [5, 4], &mut rng);
        let x: Vec<f64> = (0..4).map(|_| standard_normal(&mut rng)).collect();
        let c = [0.4, -1.1, 0.25];
        let gv = -0.6;

        let fw = params.forward(&obs(&x)).unwrap();
        let analytic = params
            .backward(&[BackwardItem {
                forward: &fw,
                logit_signal: &c,
                value_signal: gv,
            }])
            .unwrap()
            .flat();

        let eval = |p: &PolicyValueParams| -> f64 {
            let fw = p.forward(&obs(&x)).unwrap();
            c.iter().zip(&fw.logits).map(|(ci, li)| ci * li).sum::<f64>() + gv * fw.value
        };
        let h = 1e-5;
        let base = params.flat();
        let mut max_rel: f64 = 0.0;
        for i in 0..base.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut vp = base.clone();
            let mut vm = base.clone();
            vp[i] += h;
            vm[i] -= h;
            plus.set_flat(&vp);
            minus.set_flat(&vm);
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let denom = (numeric.abs() + analytic[i].abs()).max(1e-8);
            max_rel = max_rel.max((numeric - analytic[i]).abs() / denom);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn adam_zero_gradient_is_a_noop() {
        let mut rng = substream(4, "adam0");
        let mut params = PolicyValueParams::init(3, 2, [4, 4], &mut rng);
        let before = params.flat();
        let zero = Gradient {
            layers: params.layers.clone().map(|l| Layer {
                rows: l.rows,
                cols: l.cols,
                w: vec![0.0; l.w.len()],
                b: vec![0.0; l.b.len()],
            }),
        };
        let mut opt = AdamState::new(1e-4, &params);
        apply_update(&mut params, &zero, &mut opt).unwrap();
        assert_eq!(params.flat(), before);
    }

    #[test]
    fn adam_decreases_a_quadratic_toy_loss() {
        // Treat the value head on a fixed input as the scalar being fit.
        let mut rng = substream(6, "adam-quad");
        let mut params = PolicyValueParams::init(2, 2, [4, 4], &mut rng);
        let x = obs(&[0.5, -0.25]);
        let target = 3.0;
        let loss = |p: &PolicyValueParams| {
            let v = p.forward(&x).unwrap().value;
            (v - target) * (v - target)
        };
        let initial = loss(&params);
        let mut opt = AdamState::new(1e-4, &params);
        for _ in 0..200 {
            let fw = params.forward(&x).unwrap();
            let grad = params
                .backward(&[BackwardItem {
                    forward: &fw,
                    logit_signal: &[0.0, 0.0],
                    value_signal: 2.0 * (fw.value - target),
                }])
                .unwrap();
            apply_update(&mut params, &grad, &mut opt).unwrap();
        }
        assert!(loss(&params) < initial, "lr=1e-4 Adam should reduce the loss");
    }

    #[test]
    fn adam_is_deterministic() {
        let mut rng = substream(8, "adam-det");
        let base = PolicyValueParams::init(3, 2, [4, 4], &mut rng);
        let fw = base.forward(&obs(&[0.1, 0.4, -0.3])).unwrap();
        let grad = base
            .backward(&[BackwardItem {
                forward: &fw,
                logit_signal: &[1.0, -0.5],
                value_signal: 0.25,
            }])
            .unwrap();
        let mut a = base.clone();
        let mut b = base.clone();
        let mut opt_a = AdamState::new(1e-4, &a);
        let mut opt_b = AdamState::new(1e-4, &b);
        apply_update(&mut a, &grad, &mut opt_a).unwrap();
        apply_update(&mut b, &grad, &mut opt_b).unwrap();
        assert_eq!(a.flat(), b.flat());
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut rng = substream(9, "adam-nan");
        let mut params = PolicyValueParams::init(2, 2, [3, 3], &mut rng);
        let before = params.flat();
        let mut grad = Gradient {
            layers: params.layers.clone(),
        };
        grad.layers[0].w[0] = f64::NAN;
        let mut opt = AdamState::new(1e-4, &params);
        assert!(apply_update(&mut params, &grad, &mut opt).is_err());
        assert_eq!(params.flat(), before);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn snapshot_is_isolated_from_live_updates() {
        let mut rng = substream(10, "snap");
        let mut params = PolicyValueParams::init(3, 2, [4, 4], &mut rng);
        let x = obs(&[0.2, 0.1, -0.9]);
        let snap = params.snapshot();
        let before = snap.forward(&x).unwrap();
        assert_eq!(
            params.forward(&x).unwrap().action_probs,
            before.action_probs
        );

        let fw = params.forward(&x).unwrap();
        let grad = params
            .backward(&[BackwardItem {
                forward: &fw,
                logit_signal: &[2.0, -2.0],
                value_signal: 1.0,
            }])
            .unwrap();
        let mut opt = AdamState::new(1e-2, &params);
        apply_update(&mut params, &grad, &mut opt).unwrap();

        let after = snap.forward(&x).unwrap();
        assert_eq!(before.action_probs, after.action_probs);
        assert_eq!(before.value, after.value);
        assert_ne!(params.forward(&x).unwrap().action_probs, before.action_probs);

        // Snapshot of a snapshot behaves identically.
        let snap2 = snap.params().snapshot();
        assert_eq!(
            snap2.forward(&x).unwrap().action_probs,
            after.action_probs
        );
    }

    #[test]
    fn entropy_stays_within_bounds_after_updates() {
        let mut rng = substream(11, "entropy-bound");
        let mut params = PolicyValueParams::init(3, 4, [6, 6], &mut rng);
        let x = obs(&[0.3, -0.3, 0.6]);
        let mut opt = AdamState::new(1e-2, &params);
        for _ in 0..50 {
            let fw = params.forward(&x).unwrap();
            let sum: f64 = fw.action_probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let entropy: f64 = fw
                .action_probs
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            assert!(entropy >= -1e-12 && entropy <= (4.0f64).ln() + 1e-12);
            let grad = params
                .backward(&[BackwardItem {
                    forward: &fw,
                    logit_signal: &[0.5, -0.25, 0.25, -0.5],
                    value_signal: 0.1,
                }])
                .unwrap();
            apply_update(&mut params, &grad, &mut opt).unwrap();
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let mut rng = substream(12, "ckpt");
        let params = PolicyValueParams::init(5, 3, [7, 6], &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.txt");
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
