//! Command-line driver: runs the studies, writes CSV tables and renders
//! error charts.

pub mod config;
pub mod plot;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use waveqn::experiments::{
    run_efficiency_study, run_grid_study, run_linear_verification, run_strategy_study, write_csv, ExperimentConfig,
    ExperimentRecord, Status,
};
use waveqn::Pairing;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] waveqn::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("plot: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "waveqn", version, about = "Waveform relaxation studies for coupled heat conduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterations and last-step error over base step count and auxiliary grid size.
    GridStudy(RunArgs),
    /// Error over work of the three auxiliary grid strategies.
    StrategyStudy(RunArgs),
    /// Error over work of quasi-Newton, constant relaxation and fixed-grid multirate runs.
    Efficiency(RunArgs),
    /// Randomized checks of the linear model problem.
    VerifyLinear(RunArgs),
    /// Render charts from existing CSV tables.
    Plot {
        /// CSV files written by the study commands.
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML file with experiment settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the larger step counts and grid sizes of the original study.
    #[arg(long)]
    pub full_scale: bool,
    /// Restrict to one or more material pairings.
    #[arg(long = "pairing", value_parser = parse_pairing)]
    pub pairings: Vec<Pairing>,
    /// Cells per direction in each subdomain.
    #[arg(long)]
    pub mesh: Option<usize>,
    /// Write zero wall times so that the CSV is byte-reproducible.
    #[arg(long)]
    pub no_wall_time: bool,
}

fn parse_pairing(s: &str) -> std::result::Result<Pairing, String> {
    s.parse().map_err(|e: waveqn::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    AcceptanceFailure,
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::GridStudy(args) => study(args, "grid_study", run_grid_study),
        Command::StrategyStudy(args) => study(args, "strategy_study", run_strategy_study),
        Command::Efficiency(args) => study(args, "efficiency", run_efficiency_study),
        Command::VerifyLinear(args) => {
            let cfg = config::resolve(args)?;
            let report = run_linear_verification(&cfg.linear, cfg.seed)?;
            let text = report.to_string();
            print!("{text}");
            create_dir(&args.out)?;
            write(&args.out.join("linear_report.txt"), text.as_bytes())?;
            Ok(if report.all_pass() {
                Outcome::Success
            } else {
                Outcome::AcceptanceFailure
            })
        }
        Command::Plot { csv, out } => {
            create_dir(out)?;
            for path in csv {
                for file in plot::plot_csv(path, out)? {
                    println!("{}", file.display());
                }
            }
            Ok(Outcome::Success)
        }
    }
}

fn study(
    args: &RunArgs,
    stem: &str,
    f: impl Fn(&ExperimentConfig) -> waveqn::Result<Vec<ExperimentRecord>>,
) -> Result<Outcome> {
    let cfg = config::resolve(args)?;
    let rows = f(&cfg)?;
    create_dir(&args.out)?;
    let csv_path = args.out.join(format!("{stem}.csv"));
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    write(&csv_path, &buf)?;
    println!("{}", csv_path.display());
    for file in plot::emit_plots(&rows, stem, &args.out)? {
        println!("{}", file.display());
    }
    let failed = rows.iter().filter(|r| r.status == Status::Failed).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", rows.len());
        return Ok(Outcome::AcceptanceFailure);
    }
    Ok(Outcome::Success)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
