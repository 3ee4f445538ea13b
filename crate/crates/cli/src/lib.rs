//! Pipeline orchestration behind the `srsm` binary: configuration, tiled
//! super-resolution, building extraction, evaluation and fixtures.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{Overrides, PipelineConfig};
pub use error::{CliError, CliResult};
