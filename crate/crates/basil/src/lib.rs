//! Command-line front end for `basil-core`: file formats, run configuration,
//! fit artifacts and the replication-study harness.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod study;

pub use commands::execute;
pub use config::{Command, RunConfig};
pub use error::{CliError, Result};
