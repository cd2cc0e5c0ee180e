//! File formats, parallel execution and the command-line front end for
//! `mbcrb-core`.

pub mod commands;
pub mod config;
pub mod output;
pub mod parallel;

pub use commands::{CliError, ExitCode};
pub use config::{ConfigError, ConfigFile};
