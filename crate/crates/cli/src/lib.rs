//! Library side of the `dqs` command: configuration parsing, sweep
//! execution and the analysis subcommands.

pub mod analyze;
pub mod config;
pub mod error;
pub mod run;
pub mod table;

pub use config::{RunConfig, Solver};
pub use error::CliError;
