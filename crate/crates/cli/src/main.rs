//! `simulate` — command-line scenario runner.
//!
//! Exit codes: 0 success, 2 configuration error, 3 internal invariant
//! violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use apdsim_core::error::Error;
use apdsim_core::scenario::{
    self, load_overlay, OutputFormat, Scenario, ScenarioConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "simulate",
    version,
    about = "Seeded simulator of a BB84 link whose receiver detectors can be permanently altered by an eavesdropper's high-power laser",
    after_help = "Scenarios: baseline, damage-sweep, blind-and-fake, dark-count-subtraction, efficiency-mismatch, watchdog-defeat.\n\
                  Flags override configuration-file values."
)]
struct Cli {
    /// Scenario to run (here or in the config file)
    #[arg(long)]
    scenario: Option<String>,

    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Top-level RNG seed; mandatory, there is no wall-clock default
    #[arg(long)]
    seed: Option<u64>,

    /// Number of protocol slots
    #[arg(long)]
    pulses: Option<u64>,

    /// Output file path
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format: csv or json
    #[arg(long)]
    format: Option<String>,

    /// Independent trials, aggregated; runs in parallel when > 1
    #[arg(long)]
    trials: Option<u32>,
}

fn resolve(cli: Cli) -> apdsim_core::Result<ScenarioConfig> {
    let overlay = match &cli.config {
        Some(path) => load_overlay(path)?,
        None => Default::default(),
    };
    let scenario_name = cli
        .scenario
        .clone()
        .or_else(|| overlay.scenario.clone())
        .ok_or_else(|| Error::Config("scenario required (--scenario or config file)".into()))?;
    let scenario = Scenario::from_name(&scenario_name)?;
    let seed = cli
        .seed
        .or(overlay.seed)
        .ok_or_else(|| Error::Config("seed required (--seed or config file)".into()))?;

    let mut config = ScenarioConfig::defaults(scenario, seed);
    config.apply_overlay(&overlay)?;
    // Flags win over file values.
    config.seed = seed;
    if let Some(pulses) = cli.pulses {
        config.protocol.n_slots = pulses;
    }
    if let Some(out) = cli.out {
        config.out = Some(out);
    }
    if let Some(format) = &cli.format {
        config.format = OutputFormat::from_name(format)?;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(cli).and_then(|config| scenario::run_scenario(&config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Invariant(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
