//! `sentrade`: ingest headlines into a daily sentiment cache, train the DQN
//! trading agent, and evaluate checkpoints against hold and random baselines.
//!
//! Exit codes: 0 success, 1 validation or configuration error, 2 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use sentrade_core::{Error, Result};

use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "sentrade", version, about = "Sentiment-aware DQN stock trading")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter headlines by entity-graph relevance and write the daily sentiment cache.
    Ingest(RunArgs),
    /// Train the agent; writes checkpoint.json and training_log.csv.
    Train(RunArgs),
    /// Roll out checkpoints, hold and random baselines; writes summary and per-policy CSVs.
    Evaluate(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Pin the sentiment feature to zero.
    #[arg(long)]
    no_sentiment: bool,
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.agent.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.agent.epochs = epochs;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if self.no_sentiment {
            cfg.use_sentiment = false;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a.load()?),
        Command::Train(a) => commands::train(&a.load()?),
        Command::Evaluate(a) => commands::evaluate(&a.load()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Io { .. }) { 2 } else { 1 })
        }
    }
}
