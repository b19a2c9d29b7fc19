//! Command-line experiment runner.
//!
//! `run` executes a sweep described by a JSON config and writes
//! `results.csv` plus `results.json`; `validate` checks a config without
//! running anything; `summarize` aggregates an existing results CSV.
//! Verbosity follows the RUST_LOG environment variable.
//!
//! Exit codes: 0 on full success, 2 when some cells failed but the sweep
//! completed, 1 on fatal errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccsgp::harness::{format_summary, read_csv, run_sweep, summarize, ExperimentConfig};
use ccsgp::MethodTag;

#[derive(Parser)]
#[command(
    name = "ccsgp",
    about = "Gaussian-process system identification experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run {
        /// Path to the JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output_dir, then ".".
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to one per CPU.
        #[arg(long)]
        workers: Option<usize>,
        /// Comma-separated method subset overriding the config.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<MethodTag>>,
    },
    /// Check that a config file parses and validates.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate an existing results CSV into per-group medians.
    Summarize {
        #[arg(long)]
        results: PathBuf,
    },
}

fn run(command: Command) -> Result<ExitCode, ccsgp::Error> {
    match command {
        Command::Run {
            config,
            out,
            workers,
            methods,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(methods) = methods {
                cfg.methods = methods;
                cfg.validate()?;
            }
            let out_dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            let report = run_sweep(&cfg, &out_dir, workers)?;
            print!("{}", format_summary(&report.summary));
            println!(
                "{} of {} cells succeeded; results in {}",
                report.results.len(),
                cfg.cell_count(),
                out_dir.display()
            );
            if report.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for failure in &report.failures {
                    eprintln!(
                        "cell failed: method {} sigma_w2 {} sigma_r2 {} seed {}: {}",
                        failure.method,
                        failure.sigma_w2,
                        failure.sigma_r2,
                        failure.seed,
                        failure.error
                    );
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!(
                "ok: {} cells on {}",
                cfg.cell_count(),
                cfg.system.name()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { results } => {
            let rows = read_csv(&results)?;
            print!("{}", format_summary(&summarize(&rows)));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
