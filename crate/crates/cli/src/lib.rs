#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod args;
pub mod commands;
pub mod error;
pub mod service;

pub use error::{exit, CliError, CliResult};

use args::{Cli, Command};

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Classify(a) => commands::classify(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::CompareMetrics(a) => commands::compare_metrics(a),
        Command::Benchmark(a) => commands::benchmark(a),
        Command::Serve(a) => commands::serve(a),
    }
}
