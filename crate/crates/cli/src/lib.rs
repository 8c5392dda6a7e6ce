//! Command-line harness: key-value configuration, per-run output
//! directories with hashed manifests, and the six subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod rundir;
pub mod verify;

pub use commands::Outcome;
pub use config::{ConfigSources, RunConfig};
pub use error::{exit, CliError};
