//! Experiment driver for the `convbsde` solver: JSON config plus flag
//! overrides, CSV output.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(convbsde::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical aborts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<convbsde::Error> for CliError {
    fn from(e: convbsde::Error) -> Self {
        match e {
            convbsde::Error::InvalidParameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "convbsde",
    version,
    about = "FFT convolution solver for (reflected) FBSDEs and call pricing"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price and delta of one call.
    Price,
    /// Sweep schemes x strikes x time meshes against a reference.
    Table {
        #[arg(long, value_delimiter = ',')]
        strikes: Option<Vec<f64>>,
        #[arg(long = "n-list", value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
    },
    /// Absolute errors at t = 0 over every grid node.
    ErrorSurface,
    /// Errors and empirical order over a list of time meshes.
    Converge {
        #[arg(long = "n-list", value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// Forward sample paths with Y, Z and A read off the solution.
    Paths,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("convbsde: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(&cli.overrides)?;
    let out: Option<PathBuf> = cfg.output.clone();
    match cli.command {
        Command::Price => {
            let r = commands::price(&cfg)?;
            println!(
                "scheme={} style={} K={} n={} price={:.4} delta={:.4} y0={:.4} z0={:.4} runtime_ms={:.0}",
                r.scheme, r.style, r.strike, r.n, r.price, r.delta, r.y0, r.z0, r.runtime_ms
            );
            if let Some(p) = &out {
                commands::write_csv(&[r], Some(p))?;
            }
        }
        Command::Table {
            strikes,
            n_list,
            schemes,
        } => {
            if let Some(s) = strikes {
                cfg.strikes = s;
            }
            if let Some(n) = n_list {
                cfg.n_list = n;
            }
            if let Some(s) = schemes {
                cfg.schemes = s;
            }
            let rows = commands::table(&cfg)?;
            if out.is_some() {
                for r in &rows {
                    println!(
                        "{:<9} K={:<6} n={:<5} price={:.4} ref={:.4} err={:.4}% delta={:.4} ref={:.4} err={:.4}%",
                        r.scheme, r.strike, r.n, r.price, r.ref_price, r.rel_err_pct, r.delta, r.ref_delta, r.delta_rel_err_pct
                    );
                }
            }
            commands::write_csv(&rows, out.as_deref())?;
        }
        Command::ErrorSurface => {
            let rows = commands::error_surface(&cfg)?;
            commands::write_csv(&rows, out.as_deref())?;
        }
        Command::Converge { n_list } => {
            if let Some(n) = n_list {
                cfg.n_list = n;
            }
            let report = commands::converge(&cfg)?;
            commands::write_csv(&report.rows, out.as_deref())?;
            eprintln!(
                "reference={:.4} fitted_order={:.3}",
                report.reference, report.fitted_order
            );
        }
        Command::Paths => {
            let (bundles, meta) = commands::paths(&cfg)?;
            commands::write_csv(&commands::path_rows(&bundles), out.as_deref())?;
            match &out {
                Some(p) => commands::write_meta(&meta, p)?,
                None => eprintln!("rng: {} seed={}", meta.rng, meta.seed),
            }
            if meta.clamped_paths > 0 {
                eprintln!(
                    "{} path(s) left the grid and were clamped",
                    meta.clamped_paths
                );
            }
        }
    }
    Ok(())
}
