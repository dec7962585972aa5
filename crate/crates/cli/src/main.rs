use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use graphshield_cli::{execute, CliError, Command, PipelineConfig};
use graphshield_core::ensemble::EnsembleMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ModeArg {
    Logic,
    Weighted,
}

/// Two-layer malware detection pipeline over program graphs.
#[derive(Debug, Parser)]
#[command(name = "graphshield", version)]
struct Args {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration; relative paths in it resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Attack step size, overriding the configuration.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fusion mode, overriding the configuration.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

fn run(args: Args) -> Result<graphshield_cli::Outcome, CliError> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::rooted_at(&std::env::current_dir().unwrap_or_default()),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(eps) = args.epsilon {
        cfg.attack.epsilon = eps;
    }
    if let Some(mode) = args.mode {
        cfg.ensemble.mode = match mode {
            ModeArg::Logic => EnsembleMode::LogicGate,
            ModeArg::Weighted => EnsembleMode::Weighted,
        };
    }
    execute(args.command, &cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = args.command;
    match run(args) {
        Ok(outcome) => {
            emit(&outcome.log_line());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            let line = serde_json::json!({ "command": command.as_str(), "status": "error", "error": e.to_string() });
            emit(&line.to_string());
            eprintln!("graphshield {}: {e}", command.as_str());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Prints the log line; a closed stdout (e.g. piped into `head`) is not an error.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}
