//! Command-line front end: fit a model from a TOML config, run the prior
//! elicitation alone, simulate benchmark scenarios, or run a verification
//! suite. Results go to files; logs and errors go to standard error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use staqsel::config::RunConfig;
use staqsel::error::Error;
use staqsel::runner;
use staqsel::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "staqsel",
    version,
    about = "Bayesian effect selection for structured additive quantile regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model described by a TOML config file.
    Fit {
        /// Path to the run config (see README for the format).
        config: PathBuf,
    },
    /// Run only the prior elicitation for a config and store the solved
    /// scales in the output directory for later fits to reuse.
    Elicit {
        /// Path to the run config.
        config: PathBuf,
    },
    /// Write a benchmark scenario's data CSV and ground-truth JSON.
    Simulate {
        /// One of: sparse-linear, sparse-nonlinear, heteroskedastic-linear.
        scenario: String,
        /// Number of observations.
        #[arg(long, default_value_t = 500)]
        n: usize,
        /// Simulation seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory receiving the two files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check the samplers and the full pipeline against reference
    /// distributions and an exact small-problem solver.
    Verify {
        /// One of: distributions, geweke, qr-mode, calibration.
        suite: String,
        /// Seed for the suite's random draws.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the detailed JSON report to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> staqsel::Result<()> {
    match cli.command {
        Command::Fit { config } => {
            let cfg = RunConfig::from_path(&config)?;
            runner::fit(&cfg)?;
            Ok(())
        }
        Command::Elicit { config } => {
            let cfg = RunConfig::from_path(&config)?;
            runner::elicit_only(&cfg)?;
            Ok(())
        }
        Command::Simulate { scenario, n, seed, out } => {
            let sc = Scenario::parse(&scenario)?;
            runner::simulate_to_dir(sc, n, seed, &out)?;
            Ok(())
        }
        Command::Verify { suite, seed, report } => {
            let rep = runner::verify_suite(&suite, seed)?;
            for c in &rep.checks {
                println!(
                    "{} {} (statistic {:.6}, threshold {:.6})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.statistic,
                    c.threshold
                );
            }
            if let Some(path) = &report {
                let text = serde_json::to_string_pretty(&rep)
                    .map_err(|e| Error::Data(format!("serializing report: {e}")))?;
                std::fs::write(path, text + "\n")?;
                log::info!("report written to {}", path.display());
            }
            let failed = rep.checks.iter().filter(|c| !c.passed).count();
            if rep.passed {
                println!("suite {}: all {} checks passed", rep.suite, rep.checks.len());
                Ok(())
            } else {
                Err(Error::Verification(format!(
                    "suite {}: {failed} of {} checks failed",
                    rep.suite,
                    rep.checks.len()
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
