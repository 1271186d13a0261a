//! Command-line front end: parses arguments, loads the experiment
//! configuration (with per-invocation overrides), runs the requested
//! stage, and maps failures to the documented exit codes — 0 success,
//! 2 configuration error, 3 data error, 4 numerical failure.
//!
//! Log verbosity comes from the `PMMHF_LOG` environment variable (standard
//! `error`/`warn`/`info`/`debug` filter syntax). Errors go to stderr as a
//! single JSON object so scripted callers can parse them.

use clap::{Args, Parser, Subcommand};
use pmmh_filters::config::load_config;
use pmmh_filters::error::{Error, Result};
use pmmh_filters::runner::{run_experiment, Command, RunOutcome};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pmmhfilters",
    version,
    about = "Particle-filter likelihood estimation, posterior sampling, and forecasting for state space models"
)]
struct Cli {
    #[command(subcommand)]
    stage: Stage,
}

#[derive(Subcommand)]
enum Stage {
    /// Draw a synthetic observation series and write it with its states
    Simulate(StageArgs),
    /// Size each filter's particle count from measured likelihood variance
    Calibrate(StageArgs),
    /// Run the posterior sampler for every configured filter
    Pmmh(StageArgs),
    /// Rolling one-step-ahead predictive evaluation over held-out data
    Forecast(StageArgs),
    /// Rebuild summary tables from chains already on disk
    Report(StageArgs),
}

impl Stage {
    fn split(&self) -> (Command, &StageArgs) {
        match self {
            Stage::Simulate(a) => (Command::Simulate, a),
            Stage::Calibrate(a) => (Command::Calibrate, a),
            Stage::Pmmh(a) => (Command::Pmmh, a),
            Stage::Forecast(a) => (Command::Forecast, a),
            Stage::Report(a) => (Command::Report, a),
        }
    }
}

#[derive(Args)]
struct StageArgs {
    /// Experiment configuration file (JSON)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Worker threads for parallel stages; use 1 for timing benchmarks
    #[arg(long, value_name = "K")]
    jobs: Option<usize>,
    /// Override the configured seed
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Override the configured output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn run(command: Command, args: &StageArgs) -> Result<RunOutcome> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = Some(out.clone());
    }
    if let Some(jobs) = args.jobs.or(config.jobs) {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("setting worker threads: {e}")))?;
    }
    run_experiment(command, &config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("PMMHF_LOG")).init();
    let cli = Cli::parse();
    let (command, args) = cli.stage.split();
    match run(command, args) {
        Ok(outcome) => {
            println!(
                "{command}: wrote {} artifacts to {}",
                outcome.artifacts.len(),
                outcome.dir.display()
            );
            for path in &outcome.artifacts {
                println!("  {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let code = err.exit_code();
            eprintln!(
                "{}",
                serde_json::json!({
                    "command": command.to_string(),
                    "error": err.to_string(),
                    "exit_code": code,
                })
            );
            // exit codes fit in u8 by construction (2, 3, 4)
            ExitCode::from(code as u8)
        }
    }
}
