//! Command-line harness: one-shot algorithm evaluation (`vote`) and full
//! farm simulations with fault injection (`simulate`).
//!
//! Exit codes: 0 on SUCCESS / full agreement, 1 on FAILURE / disagreement,
//! 2 on usage or config errors. Human-readable tables go to standard output,
//! logs and event traces to standard error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use voting_farm::algorithms::{self, VoteInputs};
use voting_farm::metric;
use voting_farm::protocol::{AlgorithmId, Outcome, DEFAULT_EPSILON, DEFAULT_SCALING_FACTOR};
use voting_farm::sim::{self, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "voting-farm",
    version,
    about = "Software voting over redundant modules: one-shot votes and farm simulations",
    after_help = "\
CONFIG GRAMMAR (simulate):
  One flat `key = value` per line; `#` starts a comment. Keys:
    n              voter count, 1..=16
    algorithm      name or id: exact-consensus|majority|median|plurality|
                   weighted-average|simple-majority|simple-average or 0..=6
    epsilon        agreement threshold (default 5e-5)
    scaling_factor weighted-averaging denominator (default 1.0)
    inputs         comma-separated values, one per module: decimal reals
                   or 0x-prefixed hex byte strings
    fault.<i>.mode   corrupt | silent
    fault.<i>.value  replacement value for corrupt faults
    timeout        per-wait bound in seconds (default 2)
    seed           schedule randomization seed (default 0)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one voting algorithm over scalar values, without a farm
    Vote {
        /// Algorithm name or numeric id
        #[arg(long = "alg")]
        alg: String,
        /// Agreement threshold for the partition-based algorithms
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Scaling factor for weighted averaging
        #[arg(long = "scaling", default_value_t = DEFAULT_SCALING_FACTOR)]
        scaling: f64,
        /// Module output values to vote on
        #[arg(required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
    },
    /// Run an n-voter farm to completion with optional fault injection
    Simulate {
        /// Scenario file (flat key = value grammar, see --help)
        #[arg(long)]
        config: PathBuf,
        /// Print the connect/broadcast/vote/deliver event log to stderr
        #[arg(long)]
        trace: bool,
        /// Override the scenario seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario timeout, in seconds
        #[arg(long)]
        timeout: Option<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Vote { alg, epsilon, scaling, values } => cmd_vote(&alg, epsilon, scaling, &values),
        Command::Simulate { config, trace, seed, timeout } => {
            cmd_simulate(&config, trace, seed, timeout)
        }
    }
}

fn cmd_vote(alg: &str, epsilon: f64, scaling: f64, values: &[f64]) -> ExitCode {
    let alg: AlgorithmId = match alg.parse() {
        Ok(alg) => alg,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    let items: Vec<Vec<u8>> = values.iter().map(|v| v.to_le_bytes().to_vec()).collect();
    let metric = metric::absolute_difference();
    let inputs = VoteInputs::new(&items, &metric)
        .epsilon(epsilon)
        .scaling_factor(scaling);
    match algorithms::dispatch(alg, &inputs) {
        Ok(result) if result.outcome == Outcome::Success => {
            println!("SUCCESS {}", sim::format_value(&result.vote));
            ExitCode::SUCCESS
        }
        Ok(_) => {
            println!("FAILURE");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn cmd_simulate(
    config: &PathBuf,
    trace: bool,
    seed: Option<u64>,
    timeout: Option<f64>,
) -> ExitCode {
    let mut config = match ScenarioConfig::from_file(config) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(secs) = timeout {
        if secs.is_nan() || secs <= 0.0 {
            eprintln!("error: timeout must be positive");
            return ExitCode::from(2);
        }
        config.timeout = Duration::from_secs_f64(secs);
    }
    let report = match sim::run_scenario(&config) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(2);
        }
    };
    print!("{}", report.render_table());
    match &report.agreed_value {
        Some(value) => println!("agreement: yes ({})", sim::format_value(value)),
        None => println!("agreement: no"),
    }
    if trace {
        for event in &report.events {
            eprintln!("{event:?}");
        }
    }
    ExitCode::from(report.exit_code() as u8)
}
