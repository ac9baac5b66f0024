//! Analysis configuration, built-in fixtures and run orchestration.

mod config;
mod fixtures;
mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::criteria::CriteriaError;
use crate::devmodel::DevError;
use crate::network::NetError;
use crate::oracle::OracleError;

pub use config::{
    AnalysisConfig, BranchConfig, BranchKind, DeviceConfig, EpsChoice, Format, Group, Mode, NetworkConfig,
    OutputConfig, Scenario, SweepConfig,
};
pub use fixtures::{bus68_partial, example2, example3, example4, fixture, FIXTURES};
pub use run::{analyze, run, write_outputs, Analysis, ExitStatus, RunOutcome};

fn at(path: &str, message: &str) -> String {
    if path.is_empty() || path == "." {
        message.to_string()
    } else {
        format!("{path}: {message}")
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}", at(.path, .message))]
    Parse { path: String, message: String },
    #[error("{}", at(.path, .message))]
    Invalid { path: String, message: String },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Device { path: String, source: DevError },
    #[error("{path}: {source}")]
    Network { path: String, source: NetError },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}
