//! Configuration, presets, CSV output and subcommands of the `spde-lab`
//! binary.

pub mod commands;
pub mod config;
pub mod csv;
pub mod presets;

pub use commands::{CliError, CliResult};
pub use config::{parse_config, ConfigError, ExperimentConfig};
