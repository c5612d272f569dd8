use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ruinlab::app::{reproduce, run_experiment, tail};
use ruinlab::driver::available_workers;
use ruinlab::presets::PAPER_SCALE_REPLICATIONS;
use ruinlab::{AppError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "ruinlab",
    version,
    about = "Ruin probabilities under inflation, returns and volume trends"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every estimator in a config file.
    Run {
        config: PathBuf,
        /// Override the worker count (default: config value).
        #[arg(long)]
        workers: Option<usize>,
        /// Use 10^7 replications.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Rerun a bundled table.
    Reproduce {
        table: Table,
        #[arg(long)]
        paper_scale: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Write the rows as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo vs closed form over the u grid, with the fitted log-log slope.
    Tail {
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    #[value(name = "table5.1")]
    T51,
    #[value(name = "table5.2")]
    T52,
}

fn load(path: &std::path::Path, workers: Option<usize>) -> Result<ExperimentConfig, AppError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(w) = workers {
        cfg.mc.workers = w.max(1);
    }
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run {
            config,
            workers,
            paper_scale,
        } => {
            let mut cfg = load(&config, workers)?;
            if paper_scale {
                cfg.mc.replications = PAPER_SCALE_REPLICATIONS;
            }
            let out = run_experiment(&cfg)?;
            if cfg.outputs.csv.is_none() {
                print!("{}", out.csv());
            }
            if cfg.outputs.report.is_none() {
                eprint!("{}", out.text);
            }
        }
        Command::Reproduce {
            table,
            paper_scale,
            workers,
            csv,
        } => {
            let name = match table {
                Table::T51 => "table5.1",
                Table::T52 => "table5.2",
            };
            let (out, text) =
                reproduce(name, paper_scale, workers.unwrap_or_else(available_workers))?;
            print!("{text}");
            if let Some(p) = csv {
                std::fs::write(&p, out.csv())
                    .map_err(|e| AppError::Io(format!("{}: {e}", p.display())))?;
            }
        }
        Command::Tail { config, workers } => {
            let cfg = load(&config, workers)?;
            let out = tail(&cfg)?;
            if cfg.outputs.csv.is_none() {
                print!("{}", out.csv());
            }
            match out.slope {
                Some(s) => eprintln!("slope = {s:.4}"),
                None => eprintln!("slope = (needs at least two u values)"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ruinlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
