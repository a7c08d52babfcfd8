//! Command-line front-end: validation suites, retrieval experiments,
//! and report aggregation.
//!
//! Exit codes: 0 success, 1 validation-suite failure, 2 usage or I/O
//! error. Set `RDIME_THREADS` to cap the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rdime_core::experiment::report::run_report;
use rdime_core::experiment::validate::run_validate;
use rdime_core::experiment::{run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "rdime",
    about = "Dimension-pruned dense retrieval: validation, experiments, reports",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the oracle and Monte Carlo validation suites.
    Validate {
        /// Master seed for every suite.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Directory for CSV artifacts.
        #[arg(long, default_value = "validate-out")]
        out: PathBuf,
        /// Corrupt the estimated noise floor (testing hook: forces the
        /// recovery suite to fail).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Run a retrieval experiment described by a JSON config.
    Experiment {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for runs, metrics, and masks.
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate results.csv files into a summary table.
    Report {
        /// Directory containing experiment outputs.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("RDIME_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| format!("RDIME_THREADS must be a positive integer, got {raw:?}"))?;
    if threads == 0 {
        return Err("RDIME_THREADS must be a positive integer".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }

    match cli.command {
        Command::Validate {
            seed,
            out,
            inject_fault,
        } => match run_validate(seed, &out, inject_fault) {
            Ok(report) => {
                for suite in &report.suites {
                    let verdict = if suite.passed { "pass" } else { "FAIL" };
                    println!("{verdict}  {}: {}", suite.name, suite.detail);
                }
                if report.all_passed() {
                    println!("all suites passed; artifacts in {}", out.display());
                    ExitCode::SUCCESS
                } else {
                    eprintln!("validation failed; artifacts in {}", out.display());
                    ExitCode::from(1)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Experiment { config, out } => {
            let parsed = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_experiment(&parsed, &out) {
                Ok(result) => {
                    for outcome in &result.policies {
                        let metrics: Vec<String> = outcome
                            .metrics
                            .iter()
                            .map(|m| format!("{}={:.4}", m.metric_name, m.mean))
                            .collect();
                        println!(
                            "{}: {} retained={:.4}",
                            outcome.label,
                            metrics.join(" "),
                            outcome.mean_retained
                        );
                    }
                    println!("artifacts in {}", result.out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Report { input } => match run_report(&input) {
            Ok(output) => {
                print!("{}", output.table);
                println!("{} rows; report.csv written to {}", output.rows, input.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
