use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pace_lq::{run, CliOverrides, Command, ModeName};

/// Peer-aware cost estimation experiments for two-player LQ games.
#[derive(Debug, Parser)]
#[command(name = "pace-lq", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Learner mode for both agents; restricts Monte Carlo and boundary studies to it.
    #[arg(long, value_enum)]
    mode: Option<ModeName>,
    /// Number of Monte Carlo runs.
    #[arg(long)]
    runs: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = CliOverrides {
        seed: args.seed,
        mode: args.mode,
        runs: args.runs,
    };
    match run(args.command, &args.config, &args.out, &overrides) {
        Ok(manifest) => {
            println!("{}: {}", manifest.command, manifest.status);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("pace-lq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
