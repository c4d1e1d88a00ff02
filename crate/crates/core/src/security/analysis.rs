//! Closed-form passing probabilities for an adversary relying on an
//! unrelated vehicle that happens to follow the verifier.

use serde::{Deserialize, Serialize};

use crate::protocol::verification::TOLERANCE_GUARD;

use super::matrix::{build_transition_matrix, n_step_matrix, TransitionMatrix};
use super::SecurityError;

/// Largest chain the exact computations accept.
pub const MAX_STATES: usize = 5_000;

/// Follower R wandering over `N` equally spaced gaps `d_min + i·d_step`,
/// starting from a uniformly random state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkModel {
    pub n: usize,
    pub d_min: f64,
    pub d_step: f64,
}

impl RandomWalkModel {
    pub fn new(n: usize, d_min: f64, d_step: f64) -> Result<Self, SecurityError> {
        if n < 2 {
            return Err(SecurityError::Domain(format!("need at least 2 states, got {n}")));
        }
        if !(d_step > 0.0) || !d_min.is_finite() {
            return Err(SecurityError::Domain(format!("d_min={d_min}, d_step={d_step}")));
        }
        Ok(Self { n, d_min, d_step })
    }

    /// Grid covering `[d_min, d_max]` exactly; fails if the range is not a
    /// whole number of steps.
    pub fn from_range(d_min: f64, d_max: f64, d_step: f64) -> Result<Self, SecurityError> {
        if !(d_step > 0.0) || !(d_max > d_min) {
            return Err(SecurityError::Domain(format!("range [{d_min}, {d_max}] step {d_step}")));
        }
        let steps = (d_max - d_min) / d_step;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(SecurityError::Domain(format!(
                "range width {} is not a multiple of the step {d_step}",
                d_max - d_min
            )));
        }
        Self::new(steps.round() as usize + 1, d_min, d_step)
    }

    pub fn d_max(&self) -> f64 {
        self.d_min + (self.n - 1) as f64 * self.d_step
    }

    pub fn distance(&self, state: usize) -> f64 {
        self.d_min + state as f64 * self.d_step
    }

    pub fn nearest_state(&self, distance: f64) -> usize {
        (((distance - self.d_min) / self.d_step).round().max(0.0) as usize).min(self.n - 1)
    }

    /// States whose gap is within γ of `checkpoint`.
    pub fn acceptance_states(&self, checkpoint: f64, gamma: f64) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| (self.distance(i) - checkpoint).abs() <= gamma + TOLERANCE_GUARD)
            .collect()
    }

    pub fn transition_matrix(&self) -> TransitionMatrix {
        build_transition_matrix(self.n).expect("n >= 2 by construction")
    }
}

/// Checkpoint states (0-based) the verifier draws from, and the walk steps
/// elapsing before each of the K deadlines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub checkpoints: Vec<usize>,
    pub steps: Vec<usize>,
    pub trials: usize,
}

impl AttackConfig {
    pub fn validate(&self, n: usize) -> Result<(), SecurityError> {
        validate_checkpoints(&self.checkpoints, n)?;
        if self.steps.contains(&0) {
            return Err(SecurityError::Domain("step counts must be at least 1".into()));
        }
        Ok(())
    }
}

fn validate_checkpoints(checkpoints: &[usize], n: usize) -> Result<(), SecurityError> {
    if checkpoints.is_empty() {
        return Err(SecurityError::Domain("empty checkpoint set".into()));
    }
    if checkpoints.len() > n {
        return Err(SecurityError::Domain(format!("M={} exceeds N={n}", checkpoints.len())));
    }
    let mut seen = vec![false; n];
    for &c in checkpoints {
        if c >= n {
            return Err(SecurityError::Domain(format!("checkpoint state {c} outside 0..{n}")));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(SecurityError::Domain(format!("checkpoint state {c} listed twice")));
        }
    }
    Ok(())
}

fn guard(n: usize) -> Result<(), SecurityError> {
    if n > MAX_STATES {
        return Err(SecurityError::TooLarge { n, max: MAX_STATES });
    }
    Ok(())
}

/// Product over challenges of the single-challenge marginal, each taken
/// from a uniform start after the cumulative number of steps:
///
/// `(1/(N·M))^K · Π_k Σ_{i∈S} Σ_j P^{n_1+…+n_k}[j][i]`.
///
/// Earlier challenges are not conditioned on; see
/// [`exact_passing_probability`] for the joint probability.
pub fn passing_probability(p: &TransitionMatrix, checkpoints: &[usize], steps: &[usize]) -> Result<f64, SecurityError> {
    let n = p.n();
    guard(n)?;
    validate_checkpoints(checkpoints, n)?;
    if steps.contains(&0) {
        return Err(SecurityError::Domain("step counts must be at least 1".into()));
    }
    let m = checkpoints.len() as f64;
    let uniform = vec![1.0 / n as f64; n];
    let mut marginal = uniform;
    let mut prob = 1.0;
    for &s in steps {
        marginal = n_step_matrix(p, s).left_mul(&marginal);
        let hit: f64 = checkpoints.iter().map(|&i| marginal[i]).sum();
        prob *= hit / m;
    }
    Ok(prob)
}

/// Joint probability that a uniformly started walk sits on the drawn
/// checkpoint at every deadline, averaged over i.i.d. uniform draws.
///
/// Forward pass: after each step block the mass on state `x` is kept with
/// weight `(1/M)·#{c : x ∈ accept(c)}` and everything else is dropped.
pub fn exact_passing_probability_with(
    p: &TransitionMatrix,
    acceptance: &[Vec<usize>],
    steps: &[usize],
) -> Result<f64, SecurityError> {
    let n = p.n();
    guard(n)?;
    if acceptance.is_empty() {
        return Err(SecurityError::Domain("empty checkpoint set".into()));
    }
    let m = acceptance.len() as f64;
    let mut weight = vec![0.0; n];
    for set in acceptance {
        for &x in set {
            if x >= n {
                return Err(SecurityError::Domain(format!("state {x} outside 0..{n}")));
            }
            weight[x] += 1.0 / m;
        }
    }
    let mut alpha = vec![1.0 / n as f64; n];
    for &s in steps {
        if s == 0 {
            return Err(SecurityError::Domain("step counts must be at least 1".into()));
        }
        alpha = n_step_matrix(p, s).left_mul(&alpha);
        for (a, w) in alpha.iter_mut().zip(&weight) {
            *a *= w;
        }
    }
    Ok(alpha.iter().sum())
}

/// [`exact_passing_probability_with`] where passing means sitting exactly on
/// the checkpoint state.
pub fn exact_passing_probability(
    p: &TransitionMatrix,
    checkpoints: &[usize],
    steps: &[usize],
) -> Result<f64, SecurityError> {
    validate_checkpoints(checkpoints, p.n())?;
    let acceptance: Vec<Vec<usize>> = checkpoints.iter().map(|&c| vec![c]).collect();
    exact_passing_probability_with(p, &acceptance, steps)
}

/// `(1/M)^K`.
pub fn guess_bound(m: usize, k: usize) -> f64 {
    (1.0 / m as f64).powi(k as i32)
}

/// `(1/N)^K`, the value the walk approaches once it has mixed.
pub fn steady_state_approx(n: usize, k: usize) -> f64 {
    (1.0 / n as f64).powi(k as i32)
}

/// Whole walk steps elapsing in `deadline` seconds, at least one.
pub fn deadline_to_steps(deadline: f64, step_duration: f64) -> usize {
    ((deadline / step_duration).round() as usize).max(1)
}
