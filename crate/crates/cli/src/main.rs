//! `clrlr`: low-rank estimation of centered log-ratio matrices from
//! multi-sample count data.

mod commands;
mod io;
mod scenario;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::io::CliResult;

#[derive(Parser)]
#[command(
    name = "clrlr",
    version,
    about = "Low-rank CLR matrix estimation from count-compositional data",
    long_about = "Estimates the centered log-ratio matrix behind multi-sample count data by \
                  nuclear-norm-penalized multinomial maximum likelihood, with zero-replacement \
                  and truncated-SVD baselines, seeded simulators, and benchmark reports."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the CLR matrix behind one count table.
    Estimate(commands::EstimateArgs),
    /// Draw one synthetic replicate of a scenario.
    Simulate(commands::SimulateArgs),
    /// Compare estimators over seeded replicates of a scenario.
    Bench(commands::BenchArgs),
    /// Write the singular value spectrum of the zero-replacement estimate.
    Spectrum(commands::SpectrumArgs),
}

/// Honors the CLRLR_THREADS cap before any parallel work starts.
fn init_threads() -> CliResult<()> {
    match std::env::var("CLRLR_THREADS") {
        Ok(raw) => {
            let threads: usize = raw
                .trim()
                .parse()
                .map_err(|_| format!("CLRLR_THREADS must be a positive integer, got {raw:?}"))?;
            if threads == 0 {
                return Err("CLRLR_THREADS must be a positive integer, got 0".into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| format!("cannot configure thread pool: {e}"))?;
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let result = match cli.command {
        Command::Estimate(args) => commands::cmd_estimate(&args),
        Command::Simulate(args) => commands::cmd_simulate(&args),
        Command::Bench(args) => commands::cmd_bench(&args),
        Command::Spectrum(args) => commands::cmd_spectrum(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
