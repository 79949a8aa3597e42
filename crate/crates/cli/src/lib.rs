//! Experiment runner for the `vlcsim` library: config loading, named
//! presets, and CSV/JSON result writing.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;

pub use config::ExperimentConfig;
pub use error::CliError;
