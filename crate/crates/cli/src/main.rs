use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hyperdecay_cli::{run, CliError, Command};

#[derive(Parser)]
#[command(name = "hyperdecay", version, about = "Decay analysis of partially dissipative hyperbolic systems")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Spectral abscissa on the grid, fitted decay type and type bound.
    Spectrum(Args),
    /// Pointwise Lyapunov certificate with margins and coercivity.
    Certify(Args),
    /// Sobolev-norm decay against the two-term bound, plus the envelope check.
    Decay(Args),
    /// Exponent feasibility, rate function and optional energy check.
    Exponents(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration (JSON).
    config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// `HYPERDECAY_THREADS` caps the worker pool.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("HYPERDECAY_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::validation("env", format!("HYPERDECAY_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation("env", e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::Spectrum(a) => (Command::Spectrum, a),
        Sub::Certify(a) => (Command::Certify, a),
        Sub::Decay(a) => (Command::Decay, a),
        Sub::Exponents(a) => (Command::Exponents, a),
    };
    let result = configure_threads().and_then(|_| run(command, &args.config, args.output_dir.as_deref()));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
