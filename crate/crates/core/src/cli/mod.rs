//! Command-line front end: config files, experiment runs and self-checks.

pub mod commands;
pub mod config;
pub mod selftest;

pub use commands::{
    cmd_compare, cmd_run, compare, run, summarise, summary_csv, CliError, CompareOutput, RunOutput, SummaryRow,
    EXIT_INFEASIBLE, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, SUMMARY_HEADER,
};
pub use config::{load_config, parse_config, Diagnostics, Experiment, RunConfig, Scale};

/// Runs every self-check, printing one line each.
pub fn cmd_selftest() -> i32 {
    if selftest::print_checks(&selftest::run_checks()) {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    }
}
