use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use audiotag_cli::config::JobConfig;
use audiotag_cli::{classify, commands, ConfigError};
use clap::{Args, Parser, Subcommand};

/// Audio tagging jobs: feature extraction, training, evaluation, transfer.
#[derive(Parser)]
#[command(name = "audiotag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML job config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.max_iterations=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set paths.output_dir=...`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Shorthand for `--set train.seed=...`.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    /// Loads the config. `fallback_seed` lets seedless commands run
    /// without a config file.
    fn load(&self, extra: Vec<String>, fallback_seed: bool) -> Result<JobConfig> {
        let mut o = self.overrides.clone();
        if let Some(d) = &self.output_dir {
            o.push(format!("paths.output_dir={}", toml_str(&d.display().to_string())));
        }
        if let Some(s) = self.seed {
            o.push(format!("train.seed={s}"));
        }
        o.extend(extra);
        let mut cfg = JobConfig::load(self.config.as_deref(), &o);
        if cfg.is_err() && fallback_seed && self.seed.is_none() {
            o.insert(0, "train.seed=0".into());
            cfg = JobConfig::load(self.config.as_deref(), &o);
        }
        cfg.map_err(|e| ConfigError(e).into())
    }
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

#[derive(Subcommand)]
enum Command {
    /// Write log-mel containers (.lmel) for WAV files.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train the configured architecture from scratch.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_iterations: Option<u64>,
    },
    /// Evaluate a checkpoint, or a score file, against the eval index.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// CSV with header `clip_id,<scores...>`.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Downstream training from a pretrained checkpoint.
    Transfer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// scratch, freeze_l1, freeze_l3 or fine_tune.
        #[arg(long)]
        strategy: Option<String>,
        /// Clips per class.
        #[arg(long)]
        shots: Option<usize>,
        #[arg(long)]
        max_iterations: Option<u64>,
    },
    /// Print parameter and multi-add counts.
    Complexity {
        #[command(flatten)]
        common: Common,
        /// Architecture spec as JSON instead of `[arch]`.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Input length in seconds (default `arch.clip_seconds`).
        #[arg(long)]
        seconds: Option<f64>,
        /// Per-layer breakdown.
        #[arg(long)]
        layers: bool,
    },
    /// Summarize a checkpoint or a log-mel container.
    Inspect {
        path: PathBuf,
        /// List every tensor.
        #[arg(long)]
        tensors: bool,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract { common, inputs } => commands::extract(&common.load(vec![], true)?, &inputs),
        Command::Train { common, max_iterations } => {
            let extra = max_iterations.map(|n| format!("train.max_iterations={n}")).into_iter().collect();
            commands::train(&common.load(extra, false)?)
        }
        Command::Eval { common, checkpoint, scores } => {
            commands::eval(&common.load(vec![], true)?, checkpoint.as_deref(), scores.as_deref())
        }
        Command::Transfer { common, checkpoint, strategy, shots, max_iterations } => {
            let mut extra = Vec::new();
            if let Some(s) = strategy {
                extra.push(format!("transfer.strategy={}", toml_str(&s)));
            }
            if let Some(n) = shots {
                extra.push(format!("transfer.shots_per_class={n}"));
            }
            if let Some(n) = max_iterations {
                extra.push(format!("train.max_iterations={n}"));
            }
            commands::transfer(&common.load(extra, false)?, &checkpoint)
        }
        Command::Complexity { common, spec, seconds, layers } => {
            commands::complexity(&common.load(vec![], true)?, spec.as_deref(), seconds, layers)
        }
        Command::Inspect { path, tensors } => commands::inspect(&path, tensors),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e) as u8)
        }
    }
}
