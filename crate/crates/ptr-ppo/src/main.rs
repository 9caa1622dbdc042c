use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ptr_ppo::cli::{cmd_compare, cmd_eval, cmd_heatmap_render, cmd_train};
use ptr_ppo::config::{Algorithm, TrainConfig};

#[derive(Parser)]
#[command(
    name = "ptr-ppo",
    about = "Proximal policy optimization with prioritized trajectory replay on small discrete-control tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (flat `key = value` lines); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment: gridworld, chain, or cartpole.
    #[arg(long)]
    env: Option<String>,
    /// Priority scheme: max, mean, or reward.
    #[arg(long)]
    scheme: Option<String>,
    /// Total environment-step budget (rounded up to whole iterations).
    #[arg(long)]
    steps: Option<u64>,
    /// Number of outer iterations; overrides --steps.
    #[arg(long)]
    iterations: Option<usize>,
    /// Priority memory capacity (power of two).
    #[arg(long)]
    memory: Option<usize>,
    /// Rollout segment length.
    #[arg(long)]
    rollout: Option<usize>,
    /// Run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Additional `key=value` overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        if let Some(env) = &self.env {
            cfg.apply_kv("env", env)?;
        }
        if let Some(scheme) = &self.scheme {
            cfg.apply_kv("priority_scheme", scheme)?;
        }
        if let Some(memory) = self.memory {
            cfg.memory_capacity = memory;
        }
        if let Some(rollout) = self.rollout {
            cfg.rollout_len = rollout;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        for kv in &self.set {
            let Some((key, value)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            cfg.apply_kv(key.trim(), value.trim())?;
        }
        if let Some(steps) = self.steps {
            let chunk = (cfg.num_envs * cfg.rollout_len) as u64;
            cfg.max_iterations = steps.div_ceil(chunk) as usize;
        }
        if let Some(iterations) = self.iterations {
            cfg.max_iterations = iterations;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics, heatmap and checkpoints.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for run artifacts.
        #[arg(long, default_value = "runs/latest")]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint: mean and std of episode return.
    Eval {
        /// Path to a checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of evaluation episodes.
        #[arg(long, default_value_t = 10)]
        episodes: usize,
    },
    /// Train several algorithms over several seeds and tabulate final returns.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated: ptr-max, ptr-mean, ptr-reward, ppo.
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<String>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, default_value = "runs/compare")]
        out_dir: PathBuf,
    },
    /// Render a heatmap CSV to a grayscale PNG.
    HeatmapRender {
        /// Input heatmap.csv.
        #[arg(long)]
        input: PathBuf,
        /// Output PNG path.
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, out_dir } => {
            let cfg = config.resolve()?;
            let artifact = cmd_train(&cfg, &out_dir).context("training run failed")?;
            let s = artifact.summary;
            println!(
                "done: {} env steps, final return {:.4} ± {:.4} ({:.1}s)",
                s.env_steps, s.final_mean_return, s.final_std_return, s.wall_time_s
            );
            if s.stale_priority_updates > 0 {
                eprintln!(
                    "warning: {} stale priority updates dropped",
                    s.stale_priority_updates
                );
            }
            println!("metrics: {}", artifact.metrics_path.display());
            println!("heatmap: {}", artifact.heatmap_path.display());
            for ckpt in &artifact.checkpoint_paths {
                println!("checkpoint: {}", ckpt.display());
            }
        }
        Command::Eval {
            checkpoint,
            config,
            episodes,
        } => {
            let cfg = config.resolve()?;
            let (mean, std) = cmd_eval(&checkpoint, &cfg, episodes, cfg.seed)?;
            println!("{mean:.4} ± {std:.4} over {episodes} episodes");
        }
        Command::Compare {
            config,
            algorithms,
            seeds,
            out_dir,
        } => {
            let cfg = config.resolve()?;
            let algorithms: Vec<Algorithm> = algorithms
                .iter()
                .map(|a| a.parse().map_err(anyhow::Error::msg))
                .collect::<Result<_>>()?;
            let result = cmd_compare(&cfg, &algorithms, &seeds, &out_dir)?;
            println!("algorithm        mean ± std (final return, {} seeds)", seeds.len());
            for row in &result.rows {
                println!("{:<16} {:.4} ± {:.4}", row.algorithm.to_string(), row.mean, row.std);
            }
            println!("table: {}", result.csv_path.display());
        }
        Command::HeatmapRender { input, output } => {
            let (w, h) = cmd_heatmap_render(&input, &output)?;
            println!("{} ({w}x{h} cells)", output.display());
        }
    }
    Ok(())
}
