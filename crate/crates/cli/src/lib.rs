//! Command-line front end for the skeleton rigging toolkit, plus a cached
//! curate → eval pipeline over a corpus directory.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod rigs;
pub mod runlog;

pub use commands::{run, Cli, Command};
pub use config::{PipelineConfig, ToyConfig};
pub use error::{CliError, Stage};
pub use pipeline::{run_pipeline, PipelineOutcome};
