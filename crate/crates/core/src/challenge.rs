//! Checkpoint space, random challenge sets and deadline adjustment when the
//! verifier's own speed changes during a challenge.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acc::{compute_deadline, compute_deadline_with_profile, simple_deadline, AccError, AccParams};

/// Guard against `floor` landing one below an exact integer because of
/// binary rounding (e.g. 30 m / 0.6 m).
const FLOOR_GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChallengeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Acc(#[from] AccError),
    #[error("malformed challenge set: {0}")]
    Malformed(String),
    #[error("verifier velocity did not stabilize after t={onset:.1} s within the trace")]
    AdjustmentTimeout { onset: f64 },
}

/// Discrete set of admissible following distances, spaced 2ρ apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSpace {
    pub checkpoints: Vec<f64>,
    pub spacing: f64,
    pub range: (f64, f64),
}

impl CheckpointSpace {
    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    /// Index of the checkpoint equal to `distance` (within a micrometer).
    pub fn index_of(&self, distance: f64) -> Option<usize> {
        self.checkpoints.iter().position(|c| (c - distance).abs() < 1e-6)
    }

    pub fn contains(&self, distance: f64) -> bool {
        self.index_of(distance).is_some()
    }
}

/// Builds S = {s_1..s_M} over `[g_min·v_V, g_max·v_V]` with
/// `M = ⌊(g_max - g_min)·v_V / 2ρ⌋ + 1`.
pub fn build_checkpoint_space(v_v: f64, g_min: f64, g_max: f64, rho: f64) -> Result<CheckpointSpace, ChallengeError> {
    if !(v_v > 0.0) || !(rho > 0.0) || !(g_min > 0.0) || !(g_min < g_max) {
        return Err(ChallengeError::Domain(format!(
            "need v_V > 0, rho > 0 and 0 < g_min < g_max (v_V={v_v}, g_min={g_min}, g_max={g_max}, rho={rho})"
        )));
    }
    let spacing = 2.0 * rho;
    let span = (g_max - g_min) * v_v;
    let m = (span / spacing + FLOOR_GUARD).floor() as usize + 1;
    let lo = g_min * v_v;
    let checkpoints = (0..m).map(|i| lo + i as f64 * spacing).collect();
    Ok(CheckpointSpace {
        checkpoints,
        spacing,
        range: (lo, g_max * v_v),
    })
}

/// `g_min`/`g_max` for a space of exactly `m` checkpoints centered on
/// `d_ref`.
pub fn centered_time_gaps(d_ref: f64, m: usize, rho: f64, v_v: f64) -> (f64, f64) {
    let half = (m.saturating_sub(1)) as f64 * rho;
    ((d_ref - half) / v_v, (d_ref + half) / v_v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChallengeEntry {
    pub distance: f64,
    /// Maneuver time from the previous entry, without the ε slack.
    pub deadline: f64,
    pub absolute_time: f64,
}

/// Γ: the K interior challenges bracketed by `(d_ref, t_0)` and
/// `(d_ref, t_{K+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeSet {
    pub entries: Vec<ChallengeEntry>,
    pub t0: f64,
}

impl ChallengeSet {
    /// Number of interior challenges.
    pub fn k(&self) -> usize {
        self.entries.len().saturating_sub(2)
    }

    pub fn d_ref(&self) -> f64 {
        self.entries[0].distance
    }

    pub fn end_time(&self) -> f64 {
        self.entries.last().map(|e| e.absolute_time).unwrap_or(self.t0)
    }

    pub fn interior(&self) -> &[ChallengeEntry] {
        &self.entries[1..self.entries.len() - 1]
    }

    /// Checks the structural invariants; `space` additionally checks that
    /// interior distances are checkpoints.
    pub fn validate(&self, space: Option<&CheckpointSpace>) -> Result<(), ChallengeError> {
        if self.entries.len() < 2 {
            return Err(ChallengeError::Malformed(format!("{} entries", self.entries.len())));
        }
        let first = self.entries[0];
        let last = self.entries[self.entries.len() - 1];
        if first.distance != last.distance {
            return Err(ChallengeError::Malformed("boundary distances differ".into()));
        }
        if first.absolute_time != self.t0 {
            return Err(ChallengeError::Malformed("first entry is not at t0".into()));
        }
        for w in self.entries.windows(2) {
            if !(w[1].absolute_time > w[0].absolute_time) {
                return Err(ChallengeError::Malformed(format!(
                    "times not increasing: {} then {}",
                    w[0].absolute_time, w[1].absolute_time
                )));
            }
        }
        if let Some(space) = space {
            for e in self.interior() {
                if !space.contains(e.distance) {
                    return Err(ChallengeError::Malformed(format!(
                        "{} m is not a checkpoint",
                        e.distance
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeadlinePolicy {
    /// Deadlines from the ACC recurrence.
    AccModel,
    /// `|d - d_prev| / v_rel`.
    Simple { v_rel: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChallengeConfig {
    pub k: usize,
    pub g_min: f64,
    pub g_max: f64,
    pub rho: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub deadline_policy: DeadlinePolicy,
    pub rng_seed: u64,
}

/// Maneuver time between two distances under `policy`, ε excluded.
pub fn segment_deadline(
    from: f64,
    to: f64,
    velocity: f64,
    policy: DeadlinePolicy,
    acc: &AccParams,
) -> Result<f64, ChallengeError> {
    Ok(match policy {
        DeadlinePolicy::AccModel => compute_deadline(from, to, velocity, velocity, acc)?.deadline,
        DeadlinePolicy::Simple { v_rel } => simple_deadline(to, from, v_rel, 0.0)?,
    })
}

/// Lays out absolute times for the given distance sequence
/// `[d_ref, d_1, ..., d_K, d_ref]` starting at `t0`.
pub fn schedule(
    distances: &[f64],
    t0: f64,
    velocity: f64,
    epsilon: f64,
    policy: DeadlinePolicy,
    acc: &AccParams,
) -> Result<ChallengeSet, ChallengeError> {
    if distances.len() < 2 {
        return Err(ChallengeError::Malformed(
            "need at least the two boundary entries".into(),
        ));
    }
    let mut entries = Vec::with_capacity(distances.len());
    entries.push(ChallengeEntry {
        distance: distances[0],
        deadline: 0.0,
        absolute_time: t0,
    });
    for w in distances.windows(2) {
        let deadline = segment_deadline(w[0], w[1], velocity, policy, acc)?;
        let prev = entries.last().expect("non-empty").absolute_time;
        entries.push(ChallengeEntry {
            distance: w[1],
            deadline,
            absolute_time: prev + deadline + epsilon,
        });
    }
    Ok(ChallengeSet { entries, t0 })
}

/// Draws K checkpoints uniformly and independently from `space` and
/// derives the deadline of each challenge from the previous checkpoint.
pub fn generate_challenges<R: Rng + ?Sized>(
    space: &CheckpointSpace,
    config: &ChallengeConfig,
    d_ref: f64,
    v_v: f64,
    t0: f64,
    acc: &AccParams,
    rng: &mut R,
) -> Result<ChallengeSet, ChallengeError> {
    let (lo, hi) = (
        space.checkpoints[0],
        *space.checkpoints.last().expect("non-empty space"),
    );
    if d_ref < lo - 1e-9 || d_ref > hi + 1e-9 {
        return Err(ChallengeError::Domain(format!("d_ref {d_ref} outside [{lo}, {hi}]")));
    }
    let mut distances = Vec::with_capacity(config.k + 2);
    distances.push(d_ref);
    for _ in 0..config.k {
        distances.push(space.checkpoints[rng.random_range(0..space.len())]);
    }
    distances.push(d_ref);
    let acc = AccParams {
        gamma: config.gamma,
        ..*acc
    };
    schedule(&distances, t0, v_v, config.epsilon, config.deadline_policy, &acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjustPolicy {
    /// Void the disturbed challenge and re-issue it once the verifier's
    /// speed is stable again.
    Repeat,
    /// Re-run the ACC recurrence with the verifier's measured speed.
    Recompute,
}

/// Speed is "stable" at t when it varied by less than `threshold` over the
/// preceding `window` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityDetector {
    pub threshold: f64,
    pub window: f64,
}

impl Default for StabilityDetector {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            window: 1.0,
        }
    }
}

/// Verifier speed sampled every `dt` seconds starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityTrace {
    pub start: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl VelocityTrace {
    fn index(&self, t: f64) -> usize {
        (((t - self.start) / self.dt).round().max(0.0)) as usize
    }

    /// Speed at `t`, held at the last sample beyond the end of the trace.
    pub fn at(&self, t: f64) -> f64 {
        let i = self.index(t).min(self.samples.len() - 1);
        self.samples[i]
    }

    pub fn end(&self) -> f64 {
        self.start + (self.samples.len() - 1) as f64 * self.dt
    }

    /// First time in `[from, to]` at which the speed differs from its value
    /// at `from` by at least the threshold.
    pub fn disturbance_onset(&self, from: f64, to: f64, det: &StabilityDetector) -> Option<f64> {
        let base = self.at(from);
        let (i0, i1) = (self.index(from), self.index(to).min(self.samples.len() - 1));
        (i0..=i1)
            .find(|&i| (self.samples[i] - base).abs() >= det.threshold)
            .map(|i| self.start + i as f64 * self.dt)
    }

    pub fn is_stable_at(&self, t: f64, det: &StabilityDetector) -> bool {
        let i1 = self.index(t);
        if i1 >= self.samples.len() {
            return false;
        }
        let w = (det.window / self.dt).round() as usize;
        if i1 < w {
            return false;
        }
        let slice = &self.samples[i1 - w..=i1];
        let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        hi - lo < det.threshold
    }

    /// First time at or after `onset` when the speed is stable.
    pub fn stabilization_time(&self, onset: f64, det: &StabilityDetector) -> Option<f64> {
        (self.index(onset)..self.samples.len())
            .map(|i| self.start + i as f64 * self.dt)
            .find(|t| self.is_stable_at(*t, det))
    }
}

/// New absolute measurement time for a challenge `from → to` that started
/// at `start` and whose verifier speed stabilized at `stable_at`.
#[allow(clippy::too_many_arguments)]
pub fn adjusted_time(
    policy: AdjustPolicy,
    from: f64,
    to: f64,
    start: f64,
    stable_at: f64,
    trace: &VelocityTrace,
    epsilon: f64,
    acc: &AccParams,
) -> Result<f64, ChallengeError> {
    match policy {
        AdjustPolicy::Repeat => {
            let v = trace.at(stable_at);
            let d = compute_deadline(from, to, v, v, acc)?.deadline;
            Ok(stable_at + d + epsilon)
        }
        AdjustPolicy::Recompute => {
            let v0 = trace.at(start);
            let r = compute_deadline_with_profile(from, to, v0, |n| trace.at(start + n as f64 * acc.dt), acc)?;
            Ok((start + r.deadline + epsilon).max(stable_at))
        }
    }
}

/// Re-times Γ against the verifier speed actually observed.
///
/// Each challenge window whose speed moved by the detector threshold gets a
/// new measurement time under `policy`; later entries are re-derived with
/// the verifier's speed at the start of their own window. A Γ flown at
/// constant speed comes back unchanged.
pub fn adjust_deadlines(
    gamma_set: &ChallengeSet,
    trace: &VelocityTrace,
    policy: AdjustPolicy,
    detector: &StabilityDetector,
    epsilon: f64,
    acc: &AccParams,
) -> Result<ChallengeSet, ChallengeError> {
    gamma_set.validate(None)?;
    let mut out = gamma_set.clone();
    let base_velocity = trace.at(gamma_set.t0);
    let mut disturbed_before = false;
    for k in 1..out.entries.len() {
        let start = out.entries[k - 1].absolute_time;
        let (from, to) = (out.entries[k - 1].distance, out.entries[k].distance);
        let v_start = trace.at(start);
        let mut deadline = out.entries[k].deadline;
        if disturbed_before && (v_start - base_velocity).abs() >= detector.threshold {
            deadline = compute_deadline(from, to, v_start, v_start, acc)?.deadline;
        }
        let mut time = start + deadline + epsilon;
        if let Some(onset) = trace.disturbance_onset(start, time, detector) {
            let stable_at = trace
                .stabilization_time(onset, detector)
                .ok_or(ChallengeError::AdjustmentTimeout { onset })?;
            time = adjusted_time(policy, from, to, start, stable_at, trace, epsilon, acc)?;
            deadline = time - start - epsilon;
            disturbed_before = true;
        }
        out.entries[k].deadline = deadline;
        out.entries[k].absolute_time = time;
    }
    Ok(out)
}
