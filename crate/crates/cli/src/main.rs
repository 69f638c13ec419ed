use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pilotwave::runner::{self, RunOptions, Scenario};

#[derive(Parser)]
#[command(name = "pilotwave", version, about = "Pilot-wave ensembles, trajectories and measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or the name of a canned scenario).
    Run {
        scenario: String,
        /// Output directory; overrides $PILOTWAVE_OUT and the file's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed overriding the file's.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for ensemble members and repeated runs.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Parse and validate a scenario file without running it.
    Validate { scenario: String },
    /// List the canned scenarios.
    Catalog,
}

fn load(arg: &str) -> Result<Scenario> {
    let path = PathBuf::from(arg);
    if path.exists() {
        return runner::load_scenario(&path).with_context(|| format!("loading {arg}"));
    }
    match runner::catalog_scenario(arg) {
        Some(s) => Ok(s?),
        None => anyhow::bail!("{arg}: no such file or canned scenario"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            workers,
            quiet,
        } => {
            let s = load(&scenario)?;
            let opts = RunOptions {
                out,
                seed,
                workers,
                quiet,
            };
            let report = runner::run_scenario(&s, &opts)?;
            if !quiet {
                for a in &report.assertions {
                    println!("{a}");
                }
                println!("outputs in {}", report.out_dir.display());
            }
            Ok(ExitCode::from(report.exit_code() as u8))
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!("{}: valid {} scenario", s.name, s.experiment.name());
            Ok(ExitCode::SUCCESS)
        }
        Command::Catalog => {
            for e in runner::catalog() {
                let s = runner::parse_scenario(e.text)?;
                println!("{:<24} {:<24} {}", e.name, s.experiment.name(), s.description);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
