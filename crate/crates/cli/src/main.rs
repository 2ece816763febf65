//! `csi-mtl`: generate synthetic channel datasets, train CSI-feedback
//! autoencoders under the independent, joint and hard-sharing regimes, and
//! evaluate or compare the trained systems.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 I/O failure, 4 shape
//! mismatch, 5 missing artifact.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "csi-mtl", version, about = "Multi-task CSI-feedback training and evaluation harness")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON configuration file; flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run seed; overrides the seed of the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory. Defaults to a subdirectory of $CSI_MTL_HOME (or of
    /// `./csi-mtl-out` when unset).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[arg(long, env = "CSI_MTL_HOME", hide = true, default_value = "csi-mtl-out")]
    pub home: PathBuf,
}

impl GlobalArgs {
    /// `--out` if given, else `default` below the home directory.
    pub fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.home.join(default))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/val/test splits of a synthetic scenario.
    Generate(commands::GenerateArgs),
    /// Train a system of encoders and decoders.
    Train(commands::TrainArgs),
    /// Evaluate one trained run.
    Eval(commands::EvalArgs),
    /// Compare several trained runs (one per regime).
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result: Result<(), CliError> = match &cli.command {
        Command::Generate(a) => commands::generate(&cli.global, a),
        Command::Train(a) => commands::train(&cli.global, a),
        Command::Eval(a) => commands::eval(&cli.global, a),
        Command::Report(a) => commands::report(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
