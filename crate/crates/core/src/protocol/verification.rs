//! Comparing what the sensor recorded against what was asked for.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::challenge::ChallengeSet;

use super::session::Verdict;

/// Slack on the tolerance comparison so that a reading exactly γ away is
/// not lost to binary rounding.
pub const TOLERANCE_GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerificationError {
    #[error("recorded {recorded} readings for {expected} challenges")]
    LengthMismatch { expected: usize, recorded: usize },
}

/// Γ': one sensor reading per entry of Γ, `None` when nothing was in range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedSet {
    pub times: Vec<f64>,
    pub readings: Vec<Option<f64>>,
}

/// Reads the sensor at each absolute time of Γ.
pub fn record_response(gamma: &ChallengeSet, mut sensor: impl FnMut(f64) -> Option<f64>) -> RecordedSet {
    let times: Vec<f64> = gamma.entries.iter().map(|e| e.absolute_time).collect();
    let readings = times.iter().map(|t| sensor(*t)).collect();
    RecordedSet { times, readings }
}

pub fn within_tolerance(reading: Option<f64>, target: f64, gamma: f64) -> bool {
    reading.is_some_and(|r| (r - target).abs() <= gamma + TOLERANCE_GUARD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    /// Pass flag per entry of Γ, boundaries included.
    pub passed: Vec<bool>,
}

impl VerificationReport {
    /// All K interior challenges passed (boundary entries ignored).
    pub fn interior_passed(&self) -> bool {
        let n = self.passed.len();
        n < 2 || self.passed[1..n - 1].iter().all(|p| *p)
    }
}

/// ACCEPT iff every entry of Γ' is within γ of its entry in Γ.
pub fn physical_verification(
    gamma_set: &ChallengeSet,
    recorded: &RecordedSet,
    gamma: f64,
) -> Result<VerificationReport, VerificationError> {
    if recorded.readings.len() != gamma_set.entries.len() {
        return Err(VerificationError::LengthMismatch {
            expected: gamma_set.entries.len(),
            recorded: recorded.readings.len(),
        });
    }
    let passed: Vec<bool> = gamma_set
        .entries
        .iter()
        .zip(&recorded.readings)
        .map(|(e, r)| within_tolerance(*r, e.distance, gamma))
        .collect();
    let verdict = if passed.iter().all(|p| *p) {
        Verdict::Accept
    } else {
        Verdict::Reject
    };
    Ok(VerificationReport { verdict, passed })
}
