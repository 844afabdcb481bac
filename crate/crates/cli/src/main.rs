//! `gdse`: one binary for the whole pipeline. Synthesizes a working set,
//! trains the diffusion backbone and the per-step noise models, runs guided
//! enhancement, evaluates it, and sweeps the guidance grid.

mod commands;
mod config;

use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::Config;

#[derive(Debug, Parser)]
#[command(
    name = "gdse",
    version,
    about = "Guided-diffusion signal enhancement harness"
)]
struct Cli {
    /// TOML configuration file (required by every command).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Caps worker threads (overrides io.workers; default: all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Overrides io.out_dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes clean clips, per-SNR mixtures, and noise-training clips.
    Synth,
    /// Trains the diffusion backbone on the clean corpus.
    TrainBackbone,
    /// Trains the per-step noise-model bank on a noise-only clip.
    TrainNoise {
        /// Noise-only WAV (the `w` sample).
        noise: PathBuf,
    },
    /// Runs guided reverse diffusion on a noisy file.
    Enhance {
        /// Noisy mixture WAV (the observation `y`).
        noisy: PathBuf,
        /// Backbone weights from `train-backbone`.
        backbone: PathBuf,
        /// Noise-model bank from `train-noise`.
        noise_model: PathBuf,
    },
    /// Reports SI-SDR and log-spectral distance against a reference.
    Eval {
        /// Clean reference WAV.
        reference: PathBuf,
        /// Enhanced estimate WAV.
        estimate: PathBuf,
        /// Unprocessed noisy WAV (the baseline row).
        noisy: PathBuf,
    },
    /// Grid-searches lambda_max x gamma; reports both metrics per point.
    Sweep,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version arrive here too; keep their conventional 0.
            let code = if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
            let _ = e.print();
            return code;
        }
    };

    // Panics are internal errors: exit 2 with a single-line diagnostic
    // instead of the default multi-line dump.
    panic::set_hook(Box::new(|_| {}));
    match panic::catch_unwind(panic::AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(cause) => {
            let msg = cause
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| cause.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let path = cli
        .config
        .as_deref()
        .context("--config PATH is required")?;
    let mut cfg = Config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.io.out_dir = out;
    }
    if let Some(n) = cli.workers.or(cfg.io.workers) {
        // First initialization wins; later calls are no-ops by design.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }

    // Every run logs the fully-resolved configuration it acted on.
    println!("# resolved config");
    print!("{}", cfg.render());
    println!("# end config");

    std::fs::create_dir_all(&cfg.io.out_dir).with_context(|| {
        format!("creating output directory {}", cfg.io.out_dir.display())
    })?;

    match &cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::TrainBackbone => commands::train_backbone(&cfg),
        Command::TrainNoise { noise } => commands::train_noise(&cfg, noise),
        Command::Enhance {
            noisy,
            backbone,
            noise_model,
        } => commands::enhance(&cfg, noisy, backbone, noise_model),
        Command::Eval {
            reference,
            estimate,
            noisy,
        } => commands::eval(&cfg, reference, estimate, noisy),
        Command::Sweep => commands::sweep(&cfg),
    }
}
