use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hsa_cli::commands::{self, Common};
use hsa_core::harness::Experiment;

#[derive(Parser)]
#[command(
    name = "hsa",
    version,
    about = "HSA soft robot simulator and experiment runner"
)]
struct Cli {
    /// TOML configuration for the verb.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Compute the operational workspace map.
    Workspace,
    /// Fit the artifact filter and both classifiers.
    TrainClassifiers,
    /// Run an experiment and write its report.
    Run {
        /// setpoint-mi, setpoint-priv or adl.
        experiment: Experiment,
        /// Run this many consecutive seeds.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
    },
    /// Score a log against the setpoints recorded in it.
    Metrics {
        log: PathBuf,
        #[arg(long)]
        proximity: Option<f64>,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Serve the live robot over websocket.
    Serve {
        /// Listen address, e.g. 127.0.0.1:8765.
        #[arg(long)]
        addr: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let common = Common {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
    };
    let res = match cli.verb {
        Verb::Workspace => commands::workspace(&common),
        Verb::TrainClassifiers => commands::train(&common),
        Verb::Run { experiment, repeat } => commands::run(&common, experiment, repeat),
        Verb::Metrics {
            log,
            proximity,
            budget,
        } => commands::metrics(&common, &log, proximity, budget),
        Verb::Serve { addr } => commands::serve(&common, addr),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
