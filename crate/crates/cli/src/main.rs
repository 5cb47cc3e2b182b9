//! `rlvlm`: run, train, index, evaluate and summarize caption refinement.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rlvlm", version, about = "Prompt-refined traffic captions with retrieval feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-key overrides shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON run config; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub clip_eps: Option<f64>,
    #[arg(long)]
    pub retention_k: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Directory of PGM/PPM images.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Prompt catalog (JSON lines).
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Knowledge base: documents as JSON lines, or an index built by `index`.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    /// Policy checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Start from a freshly seeded policy instead of a checkpoint.
    #[arg(long)]
    pub fresh: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refine captions for every image and write one report per image.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        inputs: InputArgs,
        /// Images processed in parallel. Output does not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the prompt policy on pipeline episodes and save a checkpoint.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        train_updates: Option<u64>,
        #[arg(long)]
        episodes_per_update: Option<usize>,
        /// Directory for the training log.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed a knowledge base and save the index.
    Index {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruction metrics over `orig/` and `recon/` image pairs and
    /// text metrics over a directory of `.txt` files.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        texts: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate report files into text-metric and per-iteration tables.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        CliError::Usage(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            inputs,
            jobs,
            out,
        } => commands::run(&config, &inputs, jobs, out),
        Command::Train {
            config,
            inputs,
            train_updates,
            episodes_per_update,
            out,
        } => commands::train(&config, &inputs, train_updates, episodes_per_update, out),
        Command::Index { config, kb, out } => commands::index(&config, &kb, &out),
        Command::Eval {
            config,
            images,
            texts,
            out,
        } => commands::eval(&config, images, texts, &out),
        Command::Report { config, reports, out } => commands::report(&config, &reports, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
