//! `hass`: batch entry points for database generation, scene synthesis,
//! loop simulation, pseudo-label quality evaluation and augmentation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use hass_core::quality_eval::ScoreField;
use hass_core::teacher_sim::AdmissionPolicy;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "hass", version, about = "Hardness-aware LiDAR scene synthesis")]
struct Cli {
    /// Run configuration (JSON). Flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed. Required when the CI environment variable is set.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a ground-truth object database from labeled scenes.
    Dbgen {
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Database directory to create.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paste database objects onto every scene at the density of one epoch.
    Synth {
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        epoch: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the simulated training loop on generated scenes.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run a fixed-threshold baseline with the same seed, e.g. `fixed:0.6`.
        #[arg(long)]
        baseline: Option<AdmissionPolicy>,
    },
    /// Filter report and confidence-vs-IoU scatter for pseudo-labels.
    EvalQuality(EvalArgs),
    /// Scene augmentations.
    #[command(subcommand)]
    Augment(AugmentCommand),
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Pseudo-label scene file, or a directory of them.
    #[arg(long)]
    pseudo: PathBuf,
    /// Ground-truth scene file, or a directory paired with `--pseudo` by file name.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.6,0.7,0.8,0.9")]
    thresholds: Vec<f64>,
    /// `confidence` or `estimated-iou`.
    #[arg(long, default_value = "confidence")]
    score_field: ScoreField,
}

#[derive(Subcommand, Debug)]
enum AugmentCommand {
    /// Mirror scenes across the x-z plane.
    Flip {
        /// Scene files or directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Swap a random angular sector of A with the same sector of B.
    Cutmix {
        a: PathBuf,
        b: PathBuf,
        /// Sector width in radians, in (0, 2pi).
        #[arg(long)]
        width: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn ci_mode() -> bool {
    std::env::var("CI").is_ok_and(|v| !v.is_empty() && v != "0" && v != "false")
}

fn effective_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_none() && ci_mode() {
        bail!("--seed is required in CI mode");
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    match &cli.command {
        Command::Dbgen { scenes, out } => {
            cfg.paths.scenes = scenes.clone().or(cfg.paths.scenes);
            cfg.paths.out = out.clone().or(cfg.paths.out);
        }
        Command::Synth { scenes, db, out, .. } => {
            cfg.paths.scenes = scenes.clone().or(cfg.paths.scenes);
            cfg.paths.db = db.clone().or(cfg.paths.db);
            cfg.paths.out = out.clone().or(cfg.paths.out);
        }
        Command::Simulate { out, .. }
        | Command::EvalQuality(EvalArgs { out, .. })
        | Command::Augment(AugmentCommand::Flip { out, .. } | AugmentCommand::Cutmix { out, .. }) => {
            cfg.paths.out = out.clone().or(cfg.paths.out);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = effective_config(&cli)?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    match cli.command {
        Command::Dbgen { .. } => commands::dbgen(&cfg),
        Command::Synth { epoch, .. } => commands::synth(&cfg, epoch),
        Command::Simulate { baseline, .. } => commands::simulate(&cfg, baseline),
        Command::EvalQuality(args) => commands::eval_quality(&cfg, &args.pseudo, &args.gt, &args.thresholds, args.score_field),
        Command::Augment(AugmentCommand::Flip { inputs, .. }) => commands::flip(&cfg, &inputs),
        Command::Augment(AugmentCommand::Cutmix { a, b, width, .. }) => commands::cutmix(&cfg, &a, &b, width),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HASS_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
