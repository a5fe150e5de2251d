//! Benchmark driver for property-guided VAE design optimization.
//!
//! Subcommands:
//! - `run <config>` — execute every cell of a config sequentially.
//! - `sweep <config> [--jobs N]` — same grid with a bounded worker pool.
//! - `report <results.csv...> [--out FILE] [--svg DIR]` — cross-seed
//!   aggregation and charts.
//! - `gradcheck` — finite-difference verification of every training loss.
//!
//! Exit codes: 0 success, 1 runtime failure (a cell failed, a gradient check
//! failed), 2 configuration/input error (unparsable config, missing file,
//! schema mismatch). `PGVAE_OUT` supplies the output directory when a config
//! omits `output_dir`; `PGVAE_LOG` sets the stderr log level (error, warn,
//! info, debug, trace; default info).

mod config;
mod gradcheck;
mod report;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "pgvae",
    about = "Property-guided VAE design optimization benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every cell of an experiment config, writing results.csv and
    /// latent.csv to the configured output directory.
    Run {
        /// Experiment config (TOML).
        config: PathBuf,
    },
    /// Run an experiment grid with up to --jobs cells in flight. Output is
    /// byte-identical to `run` for any job count.
    Sweep {
        /// Experiment config (TOML).
        config: PathBuf,
        /// Worker thread bound.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Aggregate one or more results CSVs across seeds (mean and 95% CI per
    /// cell and metric), optionally rendering SVG charts.
    Report {
        /// Results CSV files produced by run/sweep.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Write the aggregate CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for SVG charts (one per dataset and varying grid axis).
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Check every registered training loss against central finite
    /// differences; exits 0 only if all pass at 1e-4.
    Gradcheck {
        /// Damage the named loss's analytic gradient (test hook).
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
}

/// Minimal stderr logger for the `log` facade.
struct StderrLogger;

static LOGGER: StderrLogger = StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, _: &log::Metadata) -> bool {
        true
    }
    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("[{}] {}", record.level().as_str().to_lowercase(), record.args());
        }
    }
    fn flush(&self) {}
}

fn init_logger() {
    let level = match std::env::var("PGVAE_LOG").as_deref() {
        Ok("error") => log::LevelFilter::Error,
        Ok("warn") => log::LevelFilter::Warn,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("trace") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Info,
    };
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(level);
    }
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    init_logger();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config } => run_experiment(&config, 1),
        Cmd::Sweep { config, jobs } => run_experiment(&config, jobs),
        Cmd::Report { inputs, out, svg } => {
            match report::cmd_report(&inputs, out.as_deref(), svg.as_deref()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(EXIT_CONFIG)
                }
            }
        }
        Cmd::Gradcheck { corrupt } => match gradcheck::cmd_gradcheck(corrupt.as_deref()) {
            Ok(0) => ExitCode::SUCCESS,
            Ok(_) => ExitCode::from(EXIT_RUNTIME),
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}

fn run_experiment(config: &Path, jobs: usize) -> ExitCode {
    let exp = match config::load(config) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    log::info!(
        "experiment '{}': {} cell(s) -> {}",
        exp.name,
        exp.cells.len(),
        exp.output_dir.display()
    );
    match runner::execute(&exp, jobs) {
        Ok(paths) => {
            log::info!(
                "wrote {} and {}",
                paths.results.display(),
                paths.latent.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
