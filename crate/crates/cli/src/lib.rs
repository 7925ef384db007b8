//! Experiment driver: config files, the five subcommands and CSV output.

pub mod cli;
pub mod config;
pub mod csvout;
pub mod error;
pub mod experiments;

pub use cli::run;
pub use config::RunConfig;
pub use error::CliError;
