use std::path::PathBuf;
use std::process::ExitCode;

use brsgd::experiment::{execute, Command, Overrides, OUT_DIR_ENV};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "brsgd", version, about = "Byzantine-resilient SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR", env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Simulate and write trace.csv, iterates.csv, manifest.json
    Run,
    /// Estimate the resilience constants at probe points
    Certify,
    /// Check the weighting lemma, the complexity bound and rate exponents
    Verify,
    /// Run the Cartesian product of the [sweep] axes
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let command = match cli.command {
        Cmd::Run => Command::Run,
        Cmd::Certify => Command::Certify,
        Cmd::Verify => Command::Verify,
        Cmd::Sweep => Command::Sweep,
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        jobs: cli.jobs,
    };
    match execute(command, &config, &overrides) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
