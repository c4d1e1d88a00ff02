//! Scenario runner, parameter sweeps, CSV output and plotting.

pub mod config;
pub mod csvio;
pub mod engine;
pub mod plot;
pub mod sweep;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::acc::AccError;
use crate::challenge::ChallengeError;
use crate::kinematics::KinematicsError;
use crate::protocol::session::SessionError;
use crate::protocol::verification::VerificationError;
use crate::protocol::wire::WireError;
use crate::security::SecurityError;

pub use config::{AdjustChoice, DeadlineChoice, ScenarioConfig, ScenarioKind};
pub use engine::{run_scenario, ChallengeRecord, MessageRecord, Party, ScenarioResult, TraceRow};
pub use sweep::{run_security_sweep, run_sweep, SecurityRow, SweepParam, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{file}: missing column '{column}'")]
    Schema { file: String, column: String },
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Challenge(#[from] ChallengeError),
    #[error(transparent)]
    Acc(#[from] AccError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Security(#[from] SecurityError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
