//! Command-line front end: dataset generation, embeddings with any of the
//! three methods, covariance-scale sweeps and comparisons against LLE.

pub mod commands;
pub mod config;
pub mod svg;

use clap::{Parser, Subcommand};

pub use config::{resolve, Flags, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] glle::GlleError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(glle::GlleError::InvalidArgument(_)) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "glle", version, about = "Locally linear embedding and generative variants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(Flags),
    /// Embed a dataset, one output per generation.
    Embed(Flags),
    /// Embed with each covariance scale in --scales.
    Sweep(Flags),
    /// Compare generations of a method against deterministic LLE.
    Compare(Flags),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(f) => {
            commands::cmd_generate(&resolve(&f)?)?;
        }
        Command::Embed(f) => {
            commands::cmd_embed(&resolve(&f)?)?;
        }
        Command::Sweep(f) => {
            commands::cmd_sweep(&resolve(&f)?)?;
        }
        Command::Compare(f) => {
            let (report, rows) = commands::cmd_compare(&resolve(&f)?)?;
            println!("lle preservation {:.6}", report.neighborhood_preservation);
            for r in &rows {
                println!(
                    "seed {} preservation {:.6} procrustes_vs_lle {:.6e}",
                    r.seed,
                    r.preservation,
                    r.procrustes_vs_lle.unwrap_or(f64::NAN)
                );
            }
            println!("max procrustes_vs_lle {:.6e}", report.procrustes_residual);
        }
    }
    Ok(())
}
