//! Command-line front end: configuration, subcommand dispatch and run
//! manifests.

pub mod commands;
pub mod config;

pub use commands::{config_hash, dispatch, CliError, Command, InvertSummary};
pub use config::{parse_config, ConfigError, RunConfig};
