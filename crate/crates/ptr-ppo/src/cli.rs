//! Command implementations behind the binary: train runs with full artifact
//! output, checkpoint evaluation, multi-seed algorithm comparisons, and
//! heatmap rendering.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::approximator::{load_checkpoint, save_checkpoint, CheckpointError, PolicyValueParams};
use crate::config::{Algorithm, ConfigError, TrainConfig};
use crate::envs::EnvSpec;
use crate::heatmap::{render, HeatmapError};
use crate::metrics::{HeatmapWriter, MetricsError, MetricsRow, MetricsWriter};
use crate::rng::substream;
use crate::trainer::{
    evaluate, train_observed, EvalPoint, IterationReport, TrainError, TrainObserver,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training aborted: {0}")]
    Train(#[from] TrainError),
    #[error("checkpoint expects obs_dim {ckpt_obs}/actions {ckpt_actions}, env `{env}` has {env_obs}/{env_actions}")]
    CheckpointEnvMismatch {
        env: String,
        ckpt_obs: usize,
        ckpt_actions: usize,
        env_obs: usize,
        env_actions: usize,
    },
    #[error("episodes must be at least 1")]
    ZeroEpisodes,
    #[error("no algorithms given")]
    NoAlgorithms,
    #[error("no seeds given")]
    NoSeeds,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything a finished training run leaves on disk, plus its summary.
#[derive(Debug)]
pub struct RunArtifact {
    pub config_path: PathBuf,
    pub metrics_path: PathBuf,
    pub heatmap_path: PathBuf,
    pub checkpoint_paths: Vec<PathBuf>,
    pub summary: RunSummary,
}

#[derive(Clone, Copy, Debug)]
pub struct RunSummary {
    pub final_mean_return: f64,
    pub final_std_return: f64,
    pub env_steps: u64,
    pub wall_time_s: f64,
    pub stale_priority_updates: u64,
}

/// Streams metrics and heatmap rows to disk as the run progresses and drops
/// a fresh checkpoint at every evaluation point.
struct ArtifactObserver {
    metrics: MetricsWriter,
    heatmap: HeatmapWriter,
    latest_checkpoint: PathBuf,
    /// Most recent loss scalars, written alongside each eval row.
    last_losses: (f64, f64, f64),
    error: Option<CliError>,
    wrote_checkpoint: bool,
}

impl ArtifactObserver {
    fn record<T>(&mut self, result: Result<T, CliError>) {
        if let Err(e) = result {
            if self.error.is_none() {
                self.error = Some(e);
            }
        }
    }
}

impl TrainObserver for ArtifactObserver {
    fn on_iteration(&mut self, report: &IterationReport) {
        let mut count = 0.0;
        let mut sums = (0.0, 0.0, 0.0);
        for s in report.on_policy.iter().chain(&report.off_policy) {
            sums.0 += s.value_loss;
            sums.1 += s.policy_loss;
            sums.2 += s.entropy;
            count += 1.0;
        }
        if count > 0.0 {
            self.last_losses = (sums.0 / count, sums.1 / count, sums.2 / count);
        }
        for row in &report.heatmap_rows {
            let r = self.heatmap.write_row(row).map_err(CliError::from);
            self.record(r);
        }
        // Eval rows go out after the iteration's losses are known.
        for eval in &report.evals {
            let row = MetricsRow {
                step: eval.env_steps,
                mean_return: eval.mean_return,
                value_loss: self.last_losses.0,
                policy_loss: self.last_losses.1,
                entropy: self.last_losses.2,
            };
            let r = self.metrics.write_row(&row).map_err(CliError::from);
            self.record(r);
        }
    }

    fn on_eval(&mut self, _point: &EvalPoint, params: &PolicyValueParams) -> bool {
        let r = save_checkpoint(params, &self.latest_checkpoint).map_err(CliError::from);
        self.record(r);
        self.wrote_checkpoint = true;
        false
    }
}

/// Runs training with the given config, writing `config.cfg`, `metrics.csv`,
/// `heatmap.csv` and checkpoints under `out_dir`.
pub fn cmd_train(cfg: &TrainConfig, out_dir: &Path) -> Result<RunArtifact, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let config_path = out_dir.join("config.cfg");
    std::fs::write(&config_path, cfg.to_config_text()).map_err(io_err(&config_path))?;

    let metrics_path = out_dir.join("metrics.csv");
    let heatmap_path = out_dir.join("heatmap.csv");
    let latest_checkpoint = out_dir.join("checkpoint_latest.txt");
    let final_checkpoint = out_dir.join("checkpoint_final.txt");

    let started = std::time::Instant::now();
    let mut observer = ArtifactObserver {
        metrics: MetricsWriter::create(&metrics_path)?,
        heatmap: HeatmapWriter::create(&heatmap_path, cfg.memory_capacity)?,
        latest_checkpoint: latest_checkpoint.clone(),
        last_losses: (0.0, 0.0, 0.0),
        error: None,
        wrote_checkpoint: false,
    };

    let outcome = match train_observed(cfg, &mut observer) {
        Ok(o) => o,
        Err(failure) => {
            // Flag the partial artifacts and keep the last usable params.
            let _ = observer.metrics.flag_aborted(&failure.error.to_string());
            let _ = save_checkpoint(&failure.last_good, &latest_checkpoint);
            return Err(failure.error.into());
        }
    };
    if let Some(e) = observer.error {
        return Err(e);
    }

    save_checkpoint(&outcome.params, &final_checkpoint)?;
    let mut checkpoint_paths = vec![final_checkpoint];
    if observer.wrote_checkpoint {
        checkpoint_paths.insert(0, latest_checkpoint);
    }

    Ok(RunArtifact {
        config_path,
        metrics_path,
        heatmap_path,
        checkpoint_paths,
        summary: RunSummary {
            final_mean_return: outcome.final_eval.mean_return,
            final_std_return: outcome.final_eval.std_return,
            env_steps: outcome.env_steps,
            wall_time_s: started.elapsed().as_secs_f64(),
            stale_priority_updates: outcome.stale_priority_updates,
        },
    })
}

/// Loads a checkpoint and reports mean/std return of the stochastic policy
/// over the requested number of episodes.
pub fn cmd_eval(
    checkpoint: &Path,
    cfg: &TrainConfig,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64), CliError> {
    if episodes == 0 {
        return Err(CliError::ZeroEpisodes);
    }
    let params = load_checkpoint(checkpoint)?;
    let spec: EnvSpec = cfg.env_spec();
    if params.obs_dim != spec.obs_dim() || params.action_count != spec.action_count() {
        return Err(CliError::CheckpointEnvMismatch {
            env: cfg.env.to_string(),
            ckpt_obs: params.obs_dim,
            ckpt_actions: params.action_count,
            env_obs: spec.obs_dim(),
            env_actions: spec.action_count(),
        });
    }
    let mut rng = substream(seed, "eval");
    Ok(evaluate(&params, spec, episodes, &mut rng)?)
}

/// Result of one comparison: per algorithm, the final returns per seed.
#[derive(Debug)]
pub struct ComparisonResult {
    pub csv_path: PathBuf,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug)]
pub struct ComparisonRow {
    pub algorithm: Algorithm,
    pub final_returns: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Trains every algorithm on every seed under the base config and tabulates
/// mean and standard deviation of the final evaluation return.
pub fn cmd_compare(
    base: &TrainConfig,
    algorithms: &[Algorithm],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<ComparisonResult, CliError> {
    if algorithms.is_empty() {
        return Err(CliError::NoAlgorithms);
    }
    if seeds.is_empty() {
        return Err(CliError::NoSeeds);
    }
    base.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut rows = Vec::with_capacity(algorithms.len());
    for &alg in algorithms {
        let mut finals = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.apply_algorithm(alg);
            cfg.seed = seed;
            let outcome = crate::trainer::train(&cfg).map_err(|f| CliError::Train(f.error))?;
            finals.push(outcome.final_eval.mean_return);
        }
        let n = finals.len() as f64;
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        rows.push(ComparisonRow {
            algorithm: alg,
            final_returns: finals,
            mean,
            std: var.sqrt(),
        });
    }

    let csv_path = out_dir.join("comparison.csv");
    let table: Vec<(String, usize, f64, f64)> = rows
        .iter()
        .map(|r| (r.algorithm.to_string(), r.final_returns.len(), r.mean, r.std))
        .collect();
    crate::metrics::write_comparison(&csv_path, &table)?;
    Ok(ComparisonResult { csv_path, rows })
}

/// Renders a heatmap CSV to a PNG; returns (width, height).
pub fn cmd_heatmap_render(input: &Path, output: &Path) -> Result<(u32, u32), CliError> {
    Ok(render(input, output)?)
}
