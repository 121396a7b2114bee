//! Configuration handling and subcommands for the `spdclab` tool.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{run, write_outputs, Command, OutputFile};
pub use config::{load_config, parse_config, SimulationConfig};
pub use error::CliError;
