//! Configuration, experiment orchestration and reports for the vortexmf
//! command-line tool.

pub mod config;
pub mod experiments;
pub mod plot;
pub mod report;
pub mod validate;

pub use config::{load_config, ConfigError, ExperimentConfig, Kind};
pub use experiments::{Context, ExperimentError};
pub use report::{Check, Outputs, Provenance, Table};
