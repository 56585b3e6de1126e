//! Command-line front end: configuration, commands and report formats.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::Config;
pub use error::CliError;
