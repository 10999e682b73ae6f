//! Configuration, orchestration and result emission for `wfduality`.

use std::path::PathBuf;

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{execute, Outcome};
pub use output::{Payload, ResultEnvelope};

// Messages embed their cause, so none is exposed as a source: the binary
// prints the full chain and would otherwise repeat it.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(wfduality_core::Error),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
    #[error("csv: {0}")]
    Csv(csv::Error),
}

impl From<wfduality_core::Error> for CliError {
    fn from(e: wfduality_core::Error) -> Self {
        CliError::Model(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e)
    }
}
