//! Command-line driver: configuration loading, the pipeline commands and
//! artifact bookkeeping.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
