//! Command-line pipeline around `gridkan-core`: configuration, case, model
//! and dataset files, and the experiment commands.

pub mod case;
pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod seeds;
pub mod table;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
