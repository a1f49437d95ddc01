//! `prodtraffic`: synthesize or ingest machine logs, fit the production
//! process, train packet models, generate traces and score models.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A failed command: exit code and a one-line message.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<prodtraffic::Error> for Failure {
    fn from(e: prodtraffic::Error) -> Self {
        Self {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA },
            message: e.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // keep diagnostics on one line
        f.write_str(&self.message.replace('\n', " "))
    }
}

#[derive(Parser, Debug)]
#[command(name = "prodtraffic", version, about = "Production-state-aware industrial traffic modeling")]
pub struct Cli {
    #[command(flatten)]
    pub shared: Shared,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Shared {
    /// Random seed (default 0)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML or JSON parameter file, or a run manifest to replay
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs (default: current directory)
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a machine log with known per-state traffic distributions
    SynthData(commands::SynthArgs),
    /// Parse a machine log into episodes and train/test samples
    Ingest(commands::IngestArgs),
    /// Estimate the semi-Markov production model from episodes
    FitSmp(commands::FitSmpArgs),
    /// Train a VAE, CVAE or GAN packet model
    Train(commands::TrainArgs),
    /// Generate a synthetic packet trace
    Generate(commands::GenerateArgs),
    /// Score trained models with per-state KL divergence
    Evaluate(commands::EvaluateArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
