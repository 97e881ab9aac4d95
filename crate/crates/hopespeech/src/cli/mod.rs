//! Command-line surface: argument schema and dispatch. The heavy
//! lifting lives in the library; this layer parses flags, resolves the
//! run config, and turns errors into nonzero exits.

pub mod commands;
pub mod config;
pub mod io;
pub mod submission;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use hopespeech::corpus::SplitName;

#[derive(Parser)]
#[command(
    name = "hopespeech",
    version,
    about = "Hope-speech classification toolkit: corpus statistics, cleaning, fine-tuning, prediction, and scoring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Compute device. Only `cpu` is available in this build; the flag
/// exists so configs written for accelerator deployments fail loudly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Device {
    Cpu,
    Accelerator,
}

/// `stats --split` argument; maps onto the corpus split roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> SplitName {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Dev => SplitName::Dev,
            SplitArg::Test => SplitName::Test,
        }
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Print class statistics for a corpus file, optionally verifying
    /// them against the published reference counts
    Stats {
        /// Corpus CSV file (columns id,text and optionally label)
        #[arg(long)]
        data: PathBuf,
        /// Role of the file; reported alongside the counts
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        /// Reference row to verify against, e.g. polyhope-en-train;
        /// mismatches exit nonzero
        #[arg(long)]
        expect: Option<String>,
    },
    /// Apply the cleaning pipeline to a corpus file and write the same
    /// schema back out
    Clean {
        /// Input corpus CSV
        #[arg(long)]
        input: PathBuf,
        /// Cleaned corpus CSV to write
        #[arg(long)]
        output: PathBuf,
    },
    /// Fine-tune a classifier as described by a run config
    Train {
        /// Run config TOML
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Device::Cpu)]
        device: Device,
    },
    /// Classify the run's test file with a trained checkpoint and write
    /// an id,label submission
    Predict {
        /// Run config TOML
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint directory (default: the run's own best checkpoint)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Submission file to write (default: <output_dir>/submission.csv)
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Device::Cpu)]
        device: Device,
    },
    /// Score a submission file against gold labels, joining rows by id
    Evaluate {
        /// Gold corpus CSV with labels
        #[arg(long)]
        gold: PathBuf,
        /// Submission CSV (id,label)
        #[arg(long)]
        predictions: PathBuf,
        /// Also write the full metrics report here as key-value text
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats { data, split, expect } => {
            commands::cmd_stats(&data, split.into(), expect.as_deref())
        }
        Command::Clean { input, output } => commands::cmd_clean(&input, &output),
        Command::Train { config, device } => commands::cmd_train(&config, device),
        Command::Predict {
            config,
            checkpoint,
            output,
            device,
        } => commands::cmd_predict(&config, checkpoint.as_deref(), output.as_deref(), device),
        Command::Evaluate {
            gold,
            predictions,
            output,
        } => commands::cmd_evaluate(&gold, &predictions, output.as_deref()),
    }
}
