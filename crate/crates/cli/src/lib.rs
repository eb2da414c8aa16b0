//! Command-line front end: config loading, the `run`, `sweep` and `check`
//! commands, and the output writers.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{
    cmd_check, cmd_run, cmd_sweep, CheckCommand, CliError, RunOptions, SweepOptions,
};
pub use config::{ConfigDocument, ConfigError};
