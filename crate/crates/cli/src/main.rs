//! `magpol` command-line front end.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use magpol::calib::Coupling;

use crate::commands::FitSource;
use crate::config::{FixedPointsConfig, PhaseDiagramConfig, SweepConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "magpol", version, about = "Active and passive magnon-polariton simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory; nothing is written without it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid scans.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed points with their linear stability.
    FixedPoints {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Stability phase diagram over a parameter grid.
    PhaseDiagram {
        #[arg(long)]
        config: PathBuf,
        /// Grid size override, columns x rows.
        #[arg(long, value_parser = parse_resolution)]
        resolution: Option<(usize, usize)>,
        #[command(flatten)]
        common: Common,
    },
    /// Stepwise detuning sweep with spectrogram.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Number of detuning steps (`N` or `Nx1`).
        #[arg(long, value_parser = parse_resolution)]
        resolution: Option<(usize, usize)>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a reflection dip.
    FitS11 {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Tagged CSV with a `freq_unit,<Hz|GHz>` header.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum)]
        coupling: Option<CouplingArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the field dependence of the magnon frequency.
    FitKittel {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Tagged CSV with a `field_unit,<mT|G>[,<Hz|GHz>]` header.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Under,
    Over,
}

impl From<CouplingArg> for Coupling {
    fn from(c: CouplingArg) -> Self {
        match c {
            CouplingArg::Under => Coupling::Under,
            CouplingArg::Over => Coupling::Over,
        }
    }
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("'{t}' is not a positive integer"))
    };
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => Ok((parse(s)?, 1)),
    }
}

fn set_threads(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot set up {n} threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::FixedPoints { config, common } => {
            set_threads(common.threads)?;
            let cfg: FixedPointsConfig = commands::load_config(&config)?;
            commands::fixed_points(&cfg, common.out.as_deref())
        }
        Command::PhaseDiagram {
            config,
            resolution,
            common,
        } => {
            set_threads(common.threads)?;
            let mut cfg: PhaseDiagramConfig = commands::load_config(&config)?;
            if let Some((nx, ny)) = resolution {
                cfg = cfg.with_resolution(nx, ny);
            }
            commands::phase_diagram(&cfg, common.out.as_deref())
        }
        Command::Sweep {
            config,
            resolution,
            common,
        } => {
            set_threads(common.threads)?;
            let mut cfg: SweepConfig = commands::load_config(&config)?;
            if let Some((n, m)) = resolution {
                if m != 1 {
                    return Err(CliError::Input("sweep resolution is a single step count".into()));
                }
                cfg = cfg.with_steps(n)?;
            }
            commands::sweep(&cfg, common.out.as_deref())
        }
        Command::FitS11 {
            config,
            input,
            coupling,
            common,
        } => {
            set_threads(common.threads)?;
            let src = FitSource::resolve(config.as_deref(), input.as_deref(), coupling.map(Into::into))?;
            commands::fit_s11_cmd(&src, common.out.as_deref())
        }
        Command::FitKittel { config, input, common } => {
            set_threads(common.threads)?;
            let src = FitSource::resolve(config.as_deref(), input.as_deref(), None)?;
            commands::fit_kittel_cmd(&src, common.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
