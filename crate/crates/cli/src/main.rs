//! droplab: train models on corrupted labels, dissect their activations,
//! and compare the reports.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
//! invariant violation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use droplab_core::Error;

#[derive(Parser)]
#[command(
    name = "droplab",
    about = "Label-noise robustness laboratory for MC-dropout networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model per the config and write epoch logs, a checkpoint,
    /// and the corruption manifest into output.dir.
    Train {
        /// Experiment config (TOML).
        #[arg(short, long)]
        config: PathBuf,
        /// Write into an existing non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Dissect a trained checkpoint: activation statistics, histograms,
    /// heatmaps, and the per-sample uncertainty dump.
    Dissect {
        #[arg(short, long)]
        config: PathBuf,
        /// Checkpoint produced by `droplab train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare two dissection reports side by side.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        /// Also write the comparison CSV here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train one model per placement with a shared seed and noise manifest.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        /// Comma-separated placements, e.g. none,all,conv_only,fc_only.
        #[arg(long, value_delimiter = ',', required = true)]
        placements: Vec<String>,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version output is a success, not a usage error
            if e.use_stderr() {
                eprintln!("{}", e);
                return ExitCode::from(1);
            }
            print!("{}", e);
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Train { config, force } => commands::train(&config, force),
        Command::Dissect { config, checkpoint } => commands::dissect(&config, &checkpoint),
        Command::Compare {
            report_a,
            report_b,
            output,
        } => commands::compare(&report_a, &report_b, output.as_deref()),
        Command::Sweep {
            config,
            placements,
            force,
        } => commands::sweep(&config, &placements, force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::Data(_) | Error::Io(_) => 2,
        Error::Shape { .. } | Error::Internal(_) => 3,
    }
}
