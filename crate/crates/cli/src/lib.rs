//! Pipeline driver behind the `intersyn` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod manifest;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
