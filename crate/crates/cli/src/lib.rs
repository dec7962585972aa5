//! Pipeline driver: configuration, artifact layout and the stage commands
//! behind the `graphshield` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{execute, Command, EmbeddedGraph, Outcome, Status};
pub use config::PipelineConfig;
pub use error::CliError;
