//! Experiment runner for OWA-aggregated class losses: training, alpha
//! sweeps, rank-based comparison of result tables, and data generation.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod report;

use std::io::Write;

use args::{Cli, Command};
use error::CliResult;

/// Dispatches a parsed command line.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => commands::train(a, out).map(drop),
        Command::Sweep(a) => commands::sweep(a, out).map(drop),
        Command::Compare(a) => commands::compare(a, out).map(drop),
        Command::Weights(a) => commands::weights(a, out).map(drop),
        Command::GenData(a) => commands::gen_data(a, out),
    }
}
