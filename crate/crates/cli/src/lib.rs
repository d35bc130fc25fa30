//! Configuration, orchestration and reporting for qred runs.

pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod summary;

pub use config::ScenarioConfig;
pub use error::{CliError, CliResult};
