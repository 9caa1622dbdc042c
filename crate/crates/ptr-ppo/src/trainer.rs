//! The full training loop: rollout collection across parallel environments,
//! an on-policy PPO phase, trajectory storage with priority computation, and
//! repeated prioritized-replay phases with truncated importance-weight
//! correction and priority refresh.
//!
//! Setting `n_off_policy_iters = 0` (with more on-policy epochs) recovers
//! the vanilla PPO baseline: no replay code path is touched.

use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::approximator::{
    apply_update, sample_action, AdamState, ApproxError, BackwardItem, PolicySnapshot,
    PolicyValueParams, DEFAULT_HIDDEN,
};
use crate::config::TrainConfig;
use crate::envs::{EnvError, EnvSpec, VecEnv};
use crate::gae::{compute_deltas, compute_gae, GaeError};
use crate::losses::{
    combined_loss, normalize_advantages, td_targets, LossBreakdown, PolicyBatch,
};
use crate::offpolicy::{corrected_advantages, cumulative_ratio, step_ratio, truncate, OffPolicyError};
use crate::priority::{
    max_priority, mean_priority, reward_priority, PriorityError, PriorityScheme,
    RunningReturnStats, TrajectoryPriority,
};
use crate::replay::{ReplayError, SumTree, Trajectory, Transition};
use crate::rng::{env_substream, substream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Gae(#[from] GaeError),
    #[error(transparent)]
    OffPolicy(#[from] OffPolicyError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Priority(#[from] PriorityError),
    #[error("non-finite loss in {phase}: value {value_loss}, policy {policy_loss}")]
    NonFiniteLoss {
        phase: &'static str,
        value_loss: f64,
        policy_loss: f64,
    },
    #[error("parameters became non-finite at iteration {iteration}")]
    NonFiniteParams { iteration: usize },
}

/// Abort report: the error plus the last finite parameters, so callers can
/// persist a usable checkpoint.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct TrainFailure {
    pub error: TrainError,
    pub last_good: PolicyValueParams,
    pub reports: Vec<IterationReport>,
}

/// Scalar view of a loss breakdown.
#[derive(Clone, Copy, Debug)]
pub struct LossScalars {
    pub value_loss: f64,
    pub policy_loss: f64,
    pub entropy: f64,
    pub total: f64,
}

impl From<&LossBreakdown> for LossScalars {
    fn from(b: &LossBreakdown) -> Self {
        Self {
            value_loss: b.value_loss,
            policy_loss: b.policy_loss,
            entropy: b.entropy,
            total: b.total,
        }
    }
}

/// One evaluation: mean/std of the undiscounted return over a fixed number
/// of stochastic-policy episodes.
#[derive(Clone, Copy, Debug)]
pub struct EvalPoint {
    pub env_steps: u64,
    pub mean_return: f64,
    pub std_return: f64,
}

/// Per-iteration record: step accounting, losses per phase, the raw priority
/// rows feeding the heatmap, and any evaluations that fired.
#[derive(Clone, Debug)]
pub struct IterationReport {
    pub iteration: usize,
    pub env_steps: u64,
    /// Rolling mean over the last 100 completed training episodes.
    pub train_return: Option<f64>,
    pub on_policy: Vec<LossScalars>,
    pub off_policy: Vec<LossScalars>,
    pub heatmap_rows: Vec<Vec<f64>>,
    pub evals: Vec<EvalPoint>,
    pub wall_time_s: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: PolicyValueParams,
    pub reports: Vec<IterationReport>,
    pub final_eval: EvalPoint,
    pub env_steps: u64,
    pub stale_priority_updates: u64,
}

/// Callbacks fired as the loop runs; used for streaming metrics to disk,
/// checkpointing at evaluation points, and early stopping.
pub trait TrainObserver {
    fn on_iteration(&mut self, _report: &IterationReport) {}
    /// Return `true` to request a clean stop after this evaluation.
    fn on_eval(&mut self, _point: &EvalPoint, _params: &PolicyValueParams) -> bool {
        false
    }
}

/// Observer that does nothing.
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

// --- rollout collection -------------------------------------------------

/// Builds the vectorized environment for a config, one seeded instance per
/// slot.
pub fn build_vec_env(spec: EnvSpec, num_envs: usize, seed: u64) -> VecEnv {
    VecEnv::new(
        (0..num_envs)
            .map(|i| {
                let mut env_rng = env_substream(seed, i);
                spec.build(env_rng.random())
            })
            .collect(),
    )
}

/// Collects one fixed-length rollout segment per environment, recording the
/// behavior probability of every sampled action. Episode boundaries land at
/// arbitrary positions; the vectorized runner resets finished environments
/// on the fly.
pub fn collect_rollout(
    vec_env: &mut VecEnv,
    params: &PolicyValueParams,
    rollout_len: usize,
    policy_rng: &mut ChaCha8Rng,
) -> Result<Vec<Trajectory>, TrainError> {
    let n = vec_env.num_envs();
    let mut segments: Vec<Vec<Transition>> = vec![Vec::with_capacity(rollout_len); n];
    for _ in 0..rollout_len {
        let obs: Vec<_> = vec_env.observations().to_vec();
        let mut actions = Vec::with_capacity(n);
        let mut behavior_probs = Vec::with_capacity(n);
        for o in &obs {
            let fw = params.forward(o)?;
            let (action, prob) = sample_action(&fw, policy_rng);
            actions.push(action);
            behavior_probs.push(prob);
        }
        let results = vec_env.vec_step(&actions)?;
        for i in 0..n {
            segments[i].push(Transition {
                obs: obs[i].clone(),
                action: actions[i],
                reward: results[i].reward,
                next_obs: results[i].next_obs.clone(),
                done: results[i].done,
                behavior_prob: behavior_probs[i],
            });
        }
    }
    Ok(segments.into_iter().map(Trajectory::new).collect())
}

// --- batch evaluation ---------------------------------------------------

struct BatchEval {
    forwards: Vec<crate::approximator::ForwardResult>,
    probs: Vec<Vec<f64>>,
    values: Vec<f64>,
    next_values: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    behavior_probs: Vec<f64>,
    /// Start offset of each trajectory in the flat arrays, plus the total.
    bounds: Vec<usize>,
}

fn eval_batch(params: &PolicyValueParams, trajs: &[Trajectory]) -> Result<BatchEval, TrainError> {
    let total: usize = trajs.iter().map(Trajectory::len).sum();
    let mut be = BatchEval {
        forwards: Vec::with_capacity(total),
        probs: Vec::with_capacity(total),
        values: Vec::with_capacity(total),
        next_values: Vec::with_capacity(total),
        actions: Vec::with_capacity(total),
        rewards: Vec::with_capacity(total),
        dones: Vec::with_capacity(total),
        behavior_probs: Vec::with_capacity(total),
        bounds: Vec::with_capacity(trajs.len() + 1),
    };
    let mut offset = 0;
    be.bounds.push(0);
    for traj in trajs {
        for tr in &traj.transitions {
            let fw = params.forward(&tr.obs)?;
            be.probs.push(fw.action_probs.clone());
            be.values.push(fw.value);
            be.forwards.push(fw);
            be.next_values.push(params.forward(&tr.next_obs)?.value);
            be.actions.push(tr.action);
            be.rewards.push(tr.reward);
            be.dones.push(tr.done);
            be.behavior_probs.push(tr.behavior_prob);
        }
        offset += traj.len();
        be.bounds.push(offset);
    }
    Ok(be)
}

/// Done-masked GAE advantages computed independently for each trajectory
/// slice of the flat batch.
fn batch_advantages(be: &BatchEval, gamma: f64, lambda: f64) -> Result<Vec<f64>, TrainError> {
    let mut advantages = Vec::with_capacity(be.values.len());
    for w in be.bounds.windows(2) {
        let (s, e) = (w[0], w[1]);
        let deltas = compute_deltas(
            &be.rewards[s..e],
            &be.values[s..e],
            &be.next_values[s..e],
            &be.dones[s..e],
            gamma,
        )?;
        advantages.extend(compute_gae(&deltas, &be.dones[s..e], gamma, lambda)?);
    }
    Ok(advantages)
}

fn snapshot_action_probs(
    snapshot: &PolicySnapshot,
    trajs: &[Trajectory],
) -> Result<Vec<f64>, TrainError> {
    let mut out = Vec::new();
    for traj in trajs {
        for tr in &traj.transitions {
            out.push(snapshot.forward(&tr.obs)?.action_probs[tr.action]);
        }
    }
    Ok(out)
}

fn finite_or_abort(b: &LossBreakdown, phase: &'static str) -> Result<(), TrainError> {
    if b.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFiniteLoss {
            phase,
            value_loss: b.value_loss,
            policy_loss: b.policy_loss,
        })
    }
}

fn backprop_and_step(
    params: &mut PolicyValueParams,
    opt: &mut AdamState,
    be: &BatchEval,
    breakdown: &LossBreakdown,
) -> Result<(), TrainError> {
    let items: Vec<BackwardItem> = be
        .forwards
        .iter()
        .enumerate()
        .map(|(i, fw)| BackwardItem {
            forward: fw,
            logit_signal: &breakdown.logit_signals[i],
            value_signal: breakdown.value_signals[i],
        })
        .collect();
    let grad = params.backward(&items)?;
    apply_update(params, &grad, opt)?;
    Ok(())
}

// --- update steps -------------------------------------------------------

/// One on-policy PPO update over fresh trajectories: done-masked GAE
/// advantages, one-step TD value targets, clipped surrogate against the
/// phase snapshot.
pub fn on_policy_update(
    params: &mut PolicyValueParams,
    opt: &mut AdamState,
    trajs: &[Trajectory],
    snapshot: &PolicySnapshot,
    cfg: &TrainConfig,
) -> Result<LossScalars, TrainError> {
    let be = eval_batch(params, trajs)?;
    let mut advantages = batch_advantages(&be, cfg.gamma, cfg.lambda)?;
    if cfg.normalize_advantages {
        normalize_advantages(&mut advantages);
    }
    let prob_old = snapshot_action_probs(snapshot, trajs)?;
    let targets = td_targets(&be.rewards, &be.next_values, &be.dones, cfg.gamma);
    let breakdown = combined_loss(
        &be.values,
        &targets,
        None,
        &PolicyBatch {
            probs: &be.probs,
            actions: &be.actions,
            prob_old: &prob_old,
            advantages: &advantages,
        },
        cfg.clip_epsilon,
        cfg.beta,
        cfg.value_loss_coef,
    );
    finite_or_abort(&breakdown, "on-policy phase")?;
    backprop_and_step(params, opt, &be, &breakdown)?;
    Ok(LossScalars::from(&breakdown))
}

/// One replay update: recomputes values, deltas and done-masked GAE under
/// the current value head, corrects the advantages with truncated done-aware
/// importance weights (snapshot policy over stored behavior probabilities),
/// and weights the value loss by the live-policy ratio.
pub fn off_policy_update(
    params: &mut PolicyValueParams,
    opt: &mut AdamState,
    trajs: &[Trajectory],
    snapshot: &PolicySnapshot,
    cfg: &TrainConfig,
) -> Result<LossScalars, TrainError> {
    let be = eval_batch(params, trajs)?;
    let advantages_done = batch_advantages(&be, cfg.gamma, cfg.lambda)?;
    let prob_snapshot = snapshot_action_probs(snapshot, trajs)?;

    let step_ratios: Vec<f64> = prob_snapshot
        .iter()
        .zip(&be.behavior_probs)
        .map(|(&p, &b)| step_ratio(p, b))
        .collect::<Result<_, _>>()?;
    let mut truncated = Vec::with_capacity(step_ratios.len());
    for w in be.bounds.windows(2) {
        let (s, e) = (w[0], w[1]);
        let cumulative = cumulative_ratio(&step_ratios[s..e], &be.dones[s..e])?;
        truncated.extend(cumulative.iter().map(|&r| truncate(r, cfg.epsilon_marg)));
    }
    let mut advantages = corrected_advantages(&advantages_done, &truncated)?;
    if cfg.normalize_advantages {
        normalize_advantages(&mut advantages);
    }

    // Value-loss correction: live-policy probability over the recorded
    // behavior probability, treated as a constant weight.
    let value_ratios: Vec<f64> = (0..be.values.len())
        .map(|i| step_ratio(be.probs[i][be.actions[i]], be.behavior_probs[i]))
        .collect::<Result<_, _>>()?;

    let targets = td_targets(&be.rewards, &be.next_values, &be.dones, cfg.gamma);
    let breakdown = combined_loss(
        &be.values,
        &targets,
        Some(&value_ratios),
        &PolicyBatch {
            probs: &be.probs,
            actions: &be.actions,
            prob_old: &prob_snapshot,
            advantages: &advantages,
        },
        cfg.clip_epsilon,
        cfg.beta,
        cfg.value_loss_coef,
    );
    finite_or_abort(&breakdown, "off-policy phase")?;
    backprop_and_step(params, opt, &be, &breakdown)?;
    Ok(LossScalars::from(&breakdown))
}

/// Snapshot once, then run the configured number of on-policy epochs over
/// the same fresh trajectories.
pub fn on_policy_phase(
    params: &mut PolicyValueParams,
    opt: &mut AdamState,
    trajs: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<Vec<LossScalars>, TrainError> {
    let snapshot = params.snapshot();
    let mut scalars = Vec::with_capacity(cfg.n_on_policy_epochs);
    for _ in 0..cfg.n_on_policy_epochs {
        scalars.push(on_policy_update(params, opt, trajs, &snapshot, cfg)?);
    }
    Ok(scalars)
}

/// Priority of one trajectory under the configured scheme, using the current
/// value head for the advantage-based schemes. For the reward scheme the
/// running statistics advance only on first insertion.
pub fn compute_trajectory_priority(
    traj: &Trajectory,
    params: &PolicyValueParams,
    stats: &mut RunningReturnStats,
    first_insertion: bool,
    cfg: &TrainConfig,
) -> Result<TrajectoryPriority, TrainError> {
    match cfg.priority_scheme {
        PriorityScheme::Reward => Ok(reward_priority(
            traj.undiscounted_return(),
            stats,
            first_insertion,
            cfg.epsilon_p,
        )),
        scheme => {
            let single = std::slice::from_ref(traj);
            let be = eval_batch(params, single)?;
            let advantages = batch_advantages(&be, cfg.gamma, cfg.lambda)?;
            let p = match scheme {
                PriorityScheme::Max => max_priority(&advantages, cfg.epsilon_p)?,
                _ => mean_priority(&advantages, cfg.epsilon_p)?,
            };
            Ok(p)
        }
    }
}

/// Scores and inserts freshly collected trajectories.
pub fn store_trajectories(
    memory: &mut SumTree,
    trajs: &[Trajectory],
    params: &PolicyValueParams,
    stats: &mut RunningReturnStats,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    for traj in trajs {
        let priority = compute_trajectory_priority(traj, params, stats, true, cfg)?;
        memory.insert(traj.clone(), &priority);
    }
    Ok(())
}

/// Output of one full off-policy phase.
pub struct OffPhaseOutput {
    pub scalars: Vec<LossScalars>,
    pub heatmap_rows: Vec<Vec<f64>>,
    pub stale_updates: u64,
}

/// Runs `n_off_policy_iters` replay iterations: snapshot, sample, update,
/// then recompute and write back the priority of every sampled trajectory.
/// Stale write-backs (slot overwritten since sampling) are dropped and
/// counted.
pub fn off_policy_phase(
    params: &mut PolicyValueParams,
    opt: &mut AdamState,
    memory: &mut SumTree,
    stats: &mut RunningReturnStats,
    cfg: &TrainConfig,
    replay_rng: &mut ChaCha8Rng,
) -> Result<OffPhaseOutput, TrainError> {
    let mut out = OffPhaseOutput {
        scalars: Vec::with_capacity(cfg.n_off_policy_iters),
        heatmap_rows: Vec::with_capacity(cfg.n_off_policy_iters),
        stale_updates: 0,
    };
    if memory.is_empty() {
        return Ok(out);
    }
    for _ in 0..cfg.n_off_policy_iters {
        let snapshot = params.snapshot();
        let records = memory.sample(cfg.off_batch_trajectories, replay_rng)?;
        let trajs: Vec<Trajectory> = records.iter().map(|r| r.trajectory.clone()).collect();
        out.scalars
            .push(off_policy_update(params, opt, &trajs, &snapshot, cfg)?);
        for record in &records {
            let refreshed =
                compute_trajectory_priority(&record.trajectory, params, stats, false, cfg)?;
            match memory.update_priority(record.index, record.insertion_index, &refreshed) {
                Ok(()) => {}
                Err(ReplayError::StaleIndex { .. }) => out.stale_updates += 1,
                Err(other) => return Err(other.into()),
            }
        }
        out.heatmap_rows.push(memory.priority_snapshot());
    }
    Ok(out)
}

/// Mean/std of the undiscounted return over stochastic-policy episodes on a
/// freshly seeded environment.
pub fn evaluate(
    params: &PolicyValueParams,
    spec: EnvSpec,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64), TrainError> {
    let mut env = spec.build(rng.random());
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut total = 0.0;
        loop {
            let fw = params.forward(&obs)?;
            let (action, _) = sample_action(&fw, rng);
            let result = env.step(action)?;
            total += result.reward;
            if result.done {
                break;
            }
            obs = result.next_obs;
        }
        returns.push(total);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

// --- the outer loop -----------------------------------------------------

pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome, Box<TrainFailure>> {
    train_observed(cfg, &mut NoopObserver)
}

pub fn train_observed(
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, Box<TrainFailure>> {
    let spec = cfg.env_spec();
    let mut init_rng = substream(cfg.seed, "init");
    let params = PolicyValueParams::init(
        spec.obs_dim(),
        spec.action_count(),
        DEFAULT_HIDDEN,
        &mut init_rng,
    );
    train_from(cfg, params, observer)
}

/// Like `train_observed` but resuming from existing parameters (for
/// example, a loaded checkpoint). Environment and optimizer state start
/// fresh.
pub fn train_from(
    cfg: &TrainConfig,
    initial_params: PolicyValueParams,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, Box<TrainFailure>> {
    let spec = cfg.env_spec();
    let mut vec_env = build_vec_env(spec, cfg.num_envs, cfg.seed);
    let mut params = initial_params;
    let mut opt = AdamState::new(cfg.lr, &params);
    let mut memory = match SumTree::new(cfg.memory_capacity, cfg.alpha) {
        Ok(m) => m,
        Err(e) => {
            return Err(Box::new(TrainFailure {
                error: e.into(),
                last_good: params,
                reports: Vec::new(),
            }))
        }
    };
    let mut stats = RunningReturnStats::new();
    let mut policy_rng = substream(cfg.seed, "policy");
    let mut replay_rng = substream(cfg.seed, "replay");
    let mut eval_rng = substream(cfg.seed, "eval");

    let mut reports: Vec<IterationReport> = Vec::new();
    let mut recent_returns: VecDeque<f64> = VecDeque::with_capacity(100);
    let mut env_steps: u64 = 0;
    let mut next_eval = cfg.eval_interval;
    let mut stale_total = 0;
    let mut last_good = params.clone();
    let mut last_eval: Option<EvalPoint> = None;
    let mut stop_requested = false;

    macro_rules! abort {
        ($err:expr) => {
            return Err(Box::new(TrainFailure {
                error: $err,
                last_good,
                reports,
            }))
        };
    }

    for iteration in 0..cfg.max_iterations {
        let t0 = Instant::now();
        let trajs =
            match collect_rollout(&mut vec_env, &params, cfg.rollout_len, &mut policy_rng) {
                Ok(t) => t,
                Err(e) => abort!(e),
            };
        env_steps += (cfg.num_envs * cfg.rollout_len) as u64;
        for r in vec_env.drain_completed_returns() {
            if recent_returns.len() == 100 {
                recent_returns.pop_front();
            }
            recent_returns.push_back(r);
        }

        let on_policy = match on_policy_phase(&mut params, &mut opt, &trajs, cfg) {
            Ok(s) => s,
            Err(e) => abort!(e),
        };
        if let Err(e) = store_trajectories(&mut memory, &trajs, &params, &mut stats, cfg) {
            abort!(e);
        }
        let off = if cfg.n_off_policy_iters > 0 {
            match off_policy_phase(
                &mut params,
                &mut opt,
                &mut memory,
                &mut stats,
                cfg,
                &mut replay_rng,
            ) {
                Ok(o) => o,
                Err(e) => abort!(e),
            }
        } else {
            OffPhaseOutput {
                scalars: Vec::new(),
                heatmap_rows: Vec::new(),
                stale_updates: 0,
            }
        };
        stale_total += off.stale_updates;

        if !params.is_finite() {
            abort!(TrainError::NonFiniteParams { iteration });
        }
        last_good = params.clone();

        let mut evals = Vec::new();
        while env_steps >= next_eval {
            let (mean, std) = match evaluate(&params, spec, cfg.eval_episodes, &mut eval_rng) {
                Ok(v) => v,
                Err(e) => abort!(e),
            };
            let point = EvalPoint {
                env_steps,
                mean_return: mean,
                std_return: std,
            };
            stop_requested |= observer.on_eval(&point, &params);
            evals.push(point);
            last_eval = Some(point);
            next_eval += cfg.eval_interval;
        }

        let train_return = if recent_returns.is_empty() {
            None
        } else {
            Some(recent_returns.iter().sum::<f64>() / recent_returns.len() as f64)
        };
        let report = IterationReport {
            iteration,
            env_steps,
            train_return,
            on_policy,
            off_policy: off.scalars,
            heatmap_rows: off.heatmap_rows,
            evals,
            wall_time_s: t0.elapsed().as_secs_f64(),
        };
        observer.on_iteration(&report);
        reports.push(report);
        if stop_requested {
            break;
        }
    }

    // A run always ends with an evaluation of the final parameters.
    let final_eval = match last_eval {
        Some(point) if point.env_steps == env_steps => point,
        _ => {
            let (mean, std) = match evaluate(&params, spec, cfg.eval_episodes, &mut eval_rng) {
                Ok(v) => v,
                Err(e) => abort!(e),
            };
            EvalPoint {
                env_steps,
                mean_return: mean,
                std_return: std,
            }
        }
    };

    Ok(TrainOutcome {
        params,
        reports,
        final_eval,
        env_steps,
        stale_priority_updates: stale_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnvName;

    fn small_cfg() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.env = EnvName::GridWorld;
        cfg.max_iterations = 3;
        cfg.memory_capacity = 16;
        cfg.eval_interval = 48;
        cfg.eval_episodes = 2;
        cfg.seed = 5;
        cfg
    }

    fn fresh_setup(cfg: &TrainConfig) -> (VecEnv, PolicyValueParams, ChaCha8Rng) {
        let spec = cfg.env_spec();
        let vec_env = build_vec_env(spec, cfg.num_envs, cfg.seed);
        let mut init_rng = substream(cfg.seed, "init");
        let params = PolicyValueParams::init(
            spec.obs_dim(),
            spec.action_count(),
            [16, 16],
            &mut init_rng,
        );
        let policy_rng = substream(cfg.seed, "policy");
        (vec_env, params, policy_rng)
    }

    #[test]
    fn rollout_shape_and_step_count() {
        let cfg = small_cfg();
        let (mut vec_env, params, mut policy_rng) = fresh_setup(&cfg);
        let trajs = collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap();
        assert_eq!(trajs.len(), 4);
        assert!(trajs.iter().all(|t| t.len() == 8));
        let total: usize = trajs.iter().map(Trajectory::len).sum();
        assert_eq!(total, 32);
    }

    #[test]
    fn rollouts_are_reproducible() {
        let cfg = small_cfg();
        let collect = || {
            let (mut vec_env, params, mut policy_rng) = fresh_setup(&cfg);
            collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap()
        };
        let a = collect();
        let b = collect();
        for (ta, tb) in a.iter().zip(&b) {
            for (xa, xb) in ta.transitions.iter().zip(&tb.transitions) {
                assert_eq!(xa.obs, xb.obs);
                assert_eq!(xa.action, xb.action);
                assert_eq!(xa.reward, xb.reward);
                assert_eq!(xa.done, xb.done);
                assert_eq!(xa.behavior_prob, xb.behavior_prob);
            }
        }
    }

    #[test]
    fn episode_boundary_inside_rollout_restarts_cleanly() {
        // Tiny gridworld so episodes finish well inside a long segment.
        let mut cfg = small_cfg();
        cfg.grid_size = 2;
        cfg.step_limit = Some(3);
        let spec = cfg.env_spec();
        let mut vec_env = build_vec_env(spec, 1, 3);
        let mut init_rng = substream(3, "init");
        let params =
            PolicyValueParams::init(spec.obs_dim(), spec.action_count(), [8, 8], &mut init_rng);
        let mut policy_rng = substream(3, "policy");
        let trajs = collect_rollout(&mut vec_env, &params, 16, &mut policy_rng).unwrap();
        let dones: Vec<usize> = trajs[0]
            .transitions
            .iter()
            .enumerate()
            .filter(|(_, t)| t.done)
            .map(|(i, _)| i)
            .collect();
        assert!(!dones.is_empty(), "expected at least one episode boundary");
        for &ix in &dones {
            if ix + 1 < trajs[0].len() {
                // The step after a boundary acts from a reset observation.
                assert_eq!(trajs[0].transitions[ix + 1].obs.values()[0], 1.0);
            }
        }
    }

    #[test]
    fn on_policy_phase_runs_one_update_per_epoch() {
        let mut cfg = small_cfg();
        cfg.n_on_policy_epochs = 2;
        let (mut vec_env, mut params, mut policy_rng) = fresh_setup(&cfg);
        let trajs = collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap();
        let mut opt = AdamState::new(cfg.lr, &params);
        let scalars = on_policy_phase(&mut params, &mut opt, &trajs, &cfg).unwrap();
        assert_eq!(scalars.len(), 2);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn first_epoch_ratios_are_unit() {
        // With theta == theta_old the clipped surrogate must equal the plain
        // surrogate: loss == -mean(advantage).
        let cfg = small_cfg();
        let (mut vec_env, mut params, mut policy_rng) = fresh_setup(&cfg);
        let trajs = collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap();
        let snapshot = params.snapshot();
        let be = eval_batch(&params, &trajs).unwrap();
        let advantages = batch_advantages(&be, cfg.gamma, cfg.lambda).unwrap();
        let mean_adv = advantages.iter().sum::<f64>() / advantages.len() as f64;
        let mut opt = AdamState::new(cfg.lr, &params);
        let scalars = on_policy_update(&mut params, &mut opt, &trajs, &snapshot, &cfg).unwrap();
        assert!(
            (scalars.policy_loss + mean_adv).abs() < 1e-12,
            "policy loss {} vs -mean advantage {}",
            scalars.policy_loss,
            -mean_adv
        );
    }

    #[test]
    fn priorities_match_recomputation_oracle() {
        let mut cfg = small_cfg();
        cfg.priority_scheme = PriorityScheme::Max;
        let (mut vec_env, params, mut policy_rng) = fresh_setup(&cfg);
        let trajs = collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap();
        let mut memory = SumTree::new(16, cfg.alpha).unwrap();
        let mut stats = RunningReturnStats::new();
        store_trajectories(&mut memory, &trajs, &params, &mut stats, &cfg).unwrap();
        let snapshot = memory.priority_snapshot();
        for (i, traj) in trajs.iter().enumerate() {
            let be = eval_batch(&params, std::slice::from_ref(traj)).unwrap();
            let advantages = batch_advantages(&be, cfg.gamma, cfg.lambda).unwrap();
            let expected = max_priority(&advantages, cfg.epsilon_p).unwrap();
            assert!((snapshot[i] - expected.value).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_trajectory_hits_priority_floor() {
        let mut cfg = small_cfg();
        cfg.priority_scheme = PriorityScheme::Max;
        let zero = PolicyValueParams::zeros(25, 4, [8, 8]);
        let spec = cfg.env_spec();
        let mut vec_env = build_vec_env(spec, 1, 11);
        let mut rng = substream(11, "policy");
        let mut segments = collect_rollout(&mut vec_env, &zero, 8, &mut rng).unwrap();
        let mut traj = segments.remove(0);
        for tr in &mut traj.transitions {
            tr.reward = 0.0;
            tr.done = false;
        }
        let mut stats = RunningReturnStats::new();
        let p = compute_trajectory_priority(&traj, &zero, &mut stats, true, &cfg).unwrap();
        assert_eq!(p.value, cfg.epsilon_p);
    }

    #[test]
    fn reward_scheme_first_trajectory_gets_average_novelty() {
        let mut cfg = small_cfg();
        cfg.priority_scheme = PriorityScheme::Reward;
        let (mut vec_env, params, mut policy_rng) = fresh_setup(&cfg);
        let trajs = collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap();
        let mut stats = RunningReturnStats::new();
        let p =
            compute_trajectory_priority(&trajs[0], &params, &mut stats, true, &cfg).unwrap();
        assert_eq!(p.value, cfg.epsilon_p + 1.0);
        assert_eq!(stats.count(), 1);
    }

    #[test]
    fn empty_memory_off_phase_is_skipped() {
        let cfg = small_cfg();
        let (_, mut params, _) = fresh_setup(&cfg);
        let mut opt = AdamState::new(cfg.lr, &params);
        let mut memory = SumTree::new(16, cfg.alpha).unwrap();
        let mut stats = RunningReturnStats::new();
        let mut rng = substream(0, "replay");
        let out = off_policy_phase(
            &mut params, &mut opt, &mut memory, &mut stats, &cfg, &mut rng,
        )
        .unwrap();
        assert!(out.scalars.is_empty());
        assert!(out.heatmap_rows.is_empty());
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn off_phase_counts_and_heatmap_shape() {
        let mut cfg = small_cfg();
        cfg.n_off_policy_iters = 3;
        cfg.off_batch_trajectories = 2;
        let (mut vec_env, mut params, mut policy_rng) = fresh_setup(&cfg);
        let trajs = collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap();
        let mut memory = SumTree::new(16, cfg.alpha).unwrap();
        let mut stats = RunningReturnStats::new();
        store_trajectories(&mut memory, &trajs, &params, &mut stats, &cfg).unwrap();
        let mut opt = AdamState::new(cfg.lr, &params);
        let mut rng = substream(1, "replay");
        let out = off_policy_phase(
            &mut params, &mut opt, &mut memory, &mut stats, &cfg, &mut rng,
        )
        .unwrap();
        assert_eq!(out.scalars.len(), 3);
        assert_eq!(out.heatmap_rows.len(), 3);
        assert!(out.heatmap_rows.iter().all(|r| r.len() == 16));
        assert_eq!(out.stale_updates, 0);
        assert_eq!(opt.step_count(), 3);
    }

    #[test]
    fn conservation_of_env_steps() {
        let mut cfg = small_cfg();
        cfg.max_iterations = 5;
        let outcome = train(&cfg).unwrap();
        assert_eq!(
            outcome.env_steps,
            (cfg.max_iterations * cfg.num_envs * cfg.rollout_len) as u64
        );
        for (i, report) in outcome.reports.iter().enumerate() {
            assert_eq!(
                report.env_steps,
                ((i + 1) * cfg.num_envs * cfg.rollout_len) as u64
            );
        }
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let mut cfg = small_cfg();
        cfg.max_iterations = 0;
        let outcome = train(&cfg).unwrap();
        assert!(outcome.reports.is_empty());
        assert_eq!(outcome.env_steps, 0);
        let mut init_rng = substream(cfg.seed, "init");
        let spec = cfg.env_spec();
        let expected = PolicyValueParams::init(
            spec.obs_dim(),
            spec.action_count(),
            DEFAULT_HIDDEN,
            &mut init_rng,
        );
        assert_eq!(outcome.params, expected);
    }

    #[test]
    fn fixed_seed_reproduces_the_report_stream() {
        let cfg = small_cfg();
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.reports.len(), b.reports.len());
        for (ra, rb) in a.reports.iter().zip(&b.reports) {
            assert_eq!(ra.env_steps, rb.env_steps);
            assert_eq!(ra.train_return, rb.train_return);
            assert_eq!(ra.heatmap_rows, rb.heatmap_rows);
            for (ea, eb) in ra.evals.iter().zip(&rb.evals) {
                assert_eq!(ea.mean_return, eb.mean_return);
                assert_eq!(ea.std_return, eb.std_return);
            }
            for (sa, sb) in ra.on_policy.iter().zip(&rb.on_policy) {
                assert_eq!(sa.total, sb.total);
            }
            for (sa, sb) in ra.off_policy.iter().zip(&rb.off_policy) {
                assert_eq!(sa.total, sb.total);
            }
        }
        assert_eq!(a.final_eval.mean_return, b.final_eval.mean_return);
    }

    #[test]
    fn vanilla_mode_matches_manual_on_policy_loop() {
        // n_off = 0 must produce exactly the update sequence of a hand-rolled
        // collect/on-policy loop; the replay path is never touched.
        let mut cfg = small_cfg();
        cfg.n_off_policy_iters = 0;
        cfg.n_on_policy_epochs = 10;
        cfg.max_iterations = 4;
        cfg.eval_interval = 1_000_000; // keep eval out of the picture
        let outcome = train(&cfg).unwrap();

        let spec = cfg.env_spec();
        let mut vec_env = build_vec_env(spec, cfg.num_envs, cfg.seed);
        let mut init_rng = substream(cfg.seed, "init");
        let mut params = PolicyValueParams::init(
            spec.obs_dim(),
            spec.action_count(),
            DEFAULT_HIDDEN,
            &mut init_rng,
        );
        let mut opt = AdamState::new(cfg.lr, &params);
        let mut policy_rng = substream(cfg.seed, "policy");
        for _ in 0..cfg.max_iterations {
            let trajs =
                collect_rollout(&mut vec_env, &params, cfg.rollout_len, &mut policy_rng).unwrap();
            on_policy_phase(&mut params, &mut opt, &trajs, &cfg).unwrap();
        }
        assert_eq!(outcome.params, params);
    }

    #[test]
    fn identity_reduction_for_fresh_replay() {
        // Replaying data generated by the current snapshot (behavior probs
        // equal snapshot probs) must reproduce the on-policy update.
        let cfg = small_cfg();
        let (mut vec_env, params, mut policy_rng) = fresh_setup(&cfg);
        let trajs = collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap();
        let snapshot = params.snapshot();

        let mut on_params = params.clone();
        let mut on_opt = AdamState::new(cfg.lr, &on_params);
        on_policy_update(&mut on_params, &mut on_opt, &trajs, &snapshot, &cfg).unwrap();

        let mut off_params = params.clone();
        let mut off_opt = AdamState::new(cfg.lr, &off_params);
        off_policy_update(&mut off_params, &mut off_opt, &trajs, &snapshot, &cfg).unwrap();

        for (a, b) in on_params.flat().iter().zip(off_params.flat()) {
            assert!(
                (a - b).abs() < 1e-10,
                "on-policy {a} vs replayed {b} diverged"
            );
        }
    }

    #[test]
    fn non_finite_parameters_abort_with_diagnostic() {
        let cfg = small_cfg();
        let (mut vec_env, mut params, mut policy_rng) = fresh_setup(&cfg);
        let trajs = collect_rollout(&mut vec_env, &params, 8, &mut policy_rng).unwrap();
        params.layers[0].w[0] = f64::INFINITY;
        let snapshot = params.snapshot();
        let mut opt = AdamState::new(cfg.lr, &params);
        let err = on_policy_update(&mut params, &mut opt, &trajs, &snapshot, &cfg).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn train_from_resumes_where_the_checkpoint_left_off() {
        let mut cfg = small_cfg();
        cfg.max_iterations = 0;
        let (_, params, _) = fresh_setup(&cfg);
        let outcome = train_from(&cfg, params.clone(), &mut NoopObserver).unwrap();
        assert_eq!(outcome.params, params);
    }

    #[test]
    fn early_stop_observer_halts_training() {
        struct StopAfterFirstEval;
        impl TrainObserver for StopAfterFirstEval {
            fn on_eval(&mut self, _p: &EvalPoint, _params: &PolicyValueParams) -> bool {
                true
            }
        }
        let mut cfg = small_cfg();
        cfg.max_iterations = 50;
        cfg.eval_interval = 32; // fires on the first iteration
        let outcome = train_observed(&cfg, &mut StopAfterFirstEval).unwrap();
        assert_eq!(outcome.reports.len(), 1);
    }
}
