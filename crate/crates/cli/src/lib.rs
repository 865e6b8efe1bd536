//! Command-line front end: sweeps, reconstruction and oracle reports.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod svg;

pub use args::Cli;
pub use commands::{run, Outcome};
pub use error::{CliError, CliResult};
