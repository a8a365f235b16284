//! `ovkron`: spectra, mutual information and Monte Carlo checks for
//! operator-valued Kronecker channel models.

mod commands;
mod config;
mod powers;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use commands::{Failure, GammaStudyArgs, McArgs, MutualInfoArgs, SpectrumArgs};

#[derive(Debug, Parser)]
#[command(name = "ovkron", version, about = "Operator-valued Kronecker channel models")]
struct Cli {
    /// Worker threads for grid and trial loops [default: available cores]. OVKRON_JOBS overrides it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalue density of HH* on a grid.
    Spectrum(SpectrumArgs),
    /// Isotropic mutual information (nats per receive antenna) over a power grid.
    Mutualinfo(MutualInfoArgs),
    /// Monte Carlo histogram and mutual information with standard errors.
    Mc(McArgs),
    /// Small-γ singular value bounds and large-γ moments of the phase model.
    GammaStudy(GammaStudyArgs),
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    match std::env::var("OVKRON_JOBS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("OVKRON_JOBS must be a positive integer, got `{v}`"))),
        },
        Err(_) => match flag {
            Some(0) => Err(Failure::Usage("--jobs must be positive".into())),
            f => Ok(f),
        },
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = jobs(cli.jobs)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start {n} worker threads: {e}")))?;
    }
    match &cli.command {
        Command::Spectrum(a) => commands::run_spectrum(a),
        Command::Mutualinfo(a) => commands::run_mutualinfo(a),
        Command::Mc(a) => commands::run_mc(a),
        Command::GammaStudy(a) => commands::run_gamma_study(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
