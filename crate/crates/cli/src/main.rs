use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use exafs_ga_cli::{run, CliError, Mode, RunConfig, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "exafs-ga", version, about = "Genetic-algorithm fitting of EXAFS spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides [run] seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides [run] output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit data with the paths of the manifest.
    Fit(Common),
    /// Fit, prune paths at each cutoff, refit.
    CutoffSweep(Common),
    /// Ensemble of fits with randomised hyperparameters.
    ErrorAnalysis(Common),
    /// Generate a synthetic spectrum from a truth chromosome.
    Synth(Common),
    /// Time generations against the number of paths.
    Benchmark(Common),
}

fn workers() -> Result<usize, CliError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n >= 1).ok_or(CliError::Config {
            location: WORKERS_ENV.to_string(),
            message: format!("expected a positive integer, got '{v}'"),
        }),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (mode, common) = match cli.command {
        Command::Fit(c) => (Mode::Fit, c),
        Command::CutoffSweep(c) => (Mode::CutoffSweep, c),
        Command::ErrorAnalysis(c) => (Mode::ErrorAnalysis, c),
        Command::Synth(c) => (Mode::Synth, c),
        Command::Benchmark(c) => (Mode::Benchmark, c),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.ga.rng_seed = seed;
    }
    if let Some(out) = common.out {
        cfg.output_dir = out;
    }
    let output = run(&cfg, mode, workers()?)?;
    if let Some(summary) = output.artifact("summary.txt") {
        print!("{summary}");
    }
    println!("artifacts written to {}", output.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
