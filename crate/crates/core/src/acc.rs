//! Adaptive cruise control recurrence used by honest candidates to move
//! between checkpoints, and by the verifier to derive challenge deadlines.
//!
//! Per step of length Δt:
//!
//! ```text
//! e[n]      = δ[n-1] + T·Δẋ[n]                 regulated spacing error
//! ẍ_des[n]  = -(Δẋ[n] + λ·e[n]) / T
//! ẍ[n]      = β·ẍ_des[n] + (1-β)·ẍ[n-1],       β = Δt / (τ + Δt)
//! l[n]      = ẋ_C[n-1]·Δt + ½·ẍ[n]·Δt²
//! δ[n]      = δ[n-1] + l[n] - (verifier displacement over the step)
//! ẋ_C[n]    = max(0, ẋ_C[n-1] + ẍ[n]·Δt)
//! ```
//!
//! δ is the signed error to the checkpoint (`d - d_act`), Δẋ = ẋ_C - ẋ_V and
//! T is the time gap of the checkpoint, fixed when the maneuver starts. The
//! headway term T·Δẋ makes this the constant-time-gap law; it vanishes at
//! matched speeds, so equilibria sit exactly on the checkpoint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccError {
    #[error("invalid ACC parameters: {0}")]
    InvalidParams(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("candidate stalled: zero velocity while a checkpoint at {checkpoint} m is pending")]
    Stalled { checkpoint: f64 },
    #[error("no convergence to within tolerance after {iters} iterations")]
    NonConvergence { iters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccParams {
    /// Convergence gain λ, 1/s.
    pub lambda: f64,
    /// Actuation time constant τ, s.
    pub tau: f64,
    /// Update step Δt, s.
    pub dt: f64,
    /// Checkpoint tolerance γ, m.
    pub gamma: f64,
    pub max_iters: usize,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            lambda: 0.4,
            tau: 0.5,
            dt: 0.1,
            gamma: 0.3,
            max_iters: 600,
        }
    }
}

impl AccParams {
    pub fn validate(&self) -> Result<(), AccError> {
        let positive = [
            ("lambda", self.lambda),
            ("tau", self.tau),
            ("dt", self.dt),
            ("gamma", self.gamma),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AccError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(AccError::InvalidParams("max_iters must be positive".into()));
        }
        Ok(())
    }

    /// Smoothing weight β = Δt / (τ + Δt).
    pub fn beta(&self) -> f64 {
        self.dt / (self.tau + self.dt)
    }
}

/// Desired acceleration `-(Δẋ + λ·δ) / T`.
pub fn desired_acceleration(gap_time: f64, rel_velocity: f64, delta: f64, lambda: f64) -> Result<f64, AccError> {
    if !(gap_time > 0.0) || !gap_time.is_finite() {
        return Err(AccError::Domain(format!("gap time must be positive, got {gap_time}")));
    }
    Ok(-(rel_velocity + lambda * delta) / gap_time)
}

/// First-order lag between the desired and the applied acceleration.
pub fn smoothed_acceleration(desired: f64, prev: f64, dt: f64, tau: f64) -> Result<f64, AccError> {
    if !(dt > 0.0) || !(tau > 0.0) {
        return Err(AccError::Domain(format!("dt={dt} and tau={tau} must be positive")));
    }
    let beta = dt / (tau + dt);
    Ok(beta * desired + (1.0 - beta) * prev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    /// ẍ[n-1].
    pub prev_accel: f64,
    /// δ[n] = d - d_act, meters.
    pub delta: f64,
    pub candidate_velocity: f64,
    pub verifier_velocity: f64,
    /// T = d / ẋ_C taken when the maneuver toward the checkpoint starts.
    pub gap_time: f64,
}

impl ControllerState {
    /// State of a candidate sitting at `start_gap` and about to head for
    /// `checkpoint`, with no residual acceleration.
    pub fn at_rest(
        start_gap: f64,
        checkpoint: f64,
        candidate_velocity: f64,
        verifier_velocity: f64,
    ) -> Result<Self, AccError> {
        Self::begin(start_gap, checkpoint, candidate_velocity, verifier_velocity, 0.0)
    }

    /// Like [`ControllerState::at_rest`] but carries over the applied
    /// acceleration of a maneuver already in progress.
    pub fn begin(
        current_gap: f64,
        checkpoint: f64,
        candidate_velocity: f64,
        verifier_velocity: f64,
        prev_accel: f64,
    ) -> Result<Self, AccError> {
        if !(checkpoint > 0.0) {
            return Err(AccError::Domain(format!(
                "checkpoint must be positive, got {checkpoint}"
            )));
        }
        if !(candidate_velocity > 0.0) {
            return Err(AccError::Stalled { checkpoint });
        }
        if !(verifier_velocity >= 0.0) {
            return Err(AccError::Domain(format!("verifier velocity {verifier_velocity}")));
        }
        Ok(Self {
            prev_accel,
            delta: checkpoint - current_gap,
            candidate_velocity,
            verifier_velocity,
            gap_time: checkpoint / candidate_velocity,
        })
    }

    pub fn rel_velocity(&self) -> f64 {
        self.candidate_velocity - self.verifier_velocity
    }

    /// Acceleration the controller applies in the next step.
    pub fn command(&self, params: &AccParams) -> Result<f64, AccError> {
        let rel = self.rel_velocity();
        let error = self.delta + self.gap_time * rel;
        let desired = desired_acceleration(self.gap_time, rel, error, params.lambda)?;
        smoothed_acceleration(desired, self.prev_accel, params.dt, params.tau)
    }
}

/// One step of the recurrence with the verifier holding its speed.
pub fn controller_step(
    state: &ControllerState,
    checkpoint: f64,
    params: &AccParams,
) -> Result<ControllerState, AccError> {
    step_with_verifier(state, checkpoint, params, state.verifier_velocity)
}

/// One step where the verifier moves from `state.verifier_velocity` to
/// `verifier_velocity_next` (linear in between).
pub fn step_with_verifier(
    state: &ControllerState,
    checkpoint: f64,
    params: &AccParams,
    verifier_velocity_next: f64,
) -> Result<ControllerState, AccError> {
    if !(checkpoint > 0.0) {
        return Err(AccError::Domain(format!(
            "checkpoint must be positive, got {checkpoint}"
        )));
    }
    if !(state.candidate_velocity > 0.0) {
        return Err(AccError::Stalled { checkpoint });
    }
    let dt = params.dt;
    let accel = state.command(params)?;
    let gain = state.candidate_velocity * dt + 0.5 * accel * dt * dt;
    let verifier_travel = 0.5 * (state.verifier_velocity + verifier_velocity_next) * dt;
    Ok(ControllerState {
        prev_accel: accel,
        delta: state.delta + gain - verifier_travel,
        candidate_velocity: (state.candidate_velocity + accel * dt).max(0.0),
        verifier_velocity: verifier_velocity_next,
        gap_time: state.gap_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadlineStep {
    pub time: f64,
    pub delta: f64,
    pub candidate_velocity: f64,
    pub verifier_velocity: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineResult {
    /// Seconds from the start of the maneuver, `dt * iterations`.
    pub deadline: f64,
    pub iterations: usize,
    pub trajectory: Vec<DeadlineStep>,
    pub converged: bool,
}

fn log_step(n: usize, s: &ControllerState, dt: f64) -> DeadlineStep {
    DeadlineStep {
        time: n as f64 * dt,
        delta: s.delta,
        candidate_velocity: s.candidate_velocity,
        verifier_velocity: s.verifier_velocity,
        accel: s.prev_accel,
    }
}

/// Time for a candidate starting at `d_ref` to first come within γ of
/// `checkpoint`, both vehicles cruising at the given speeds.
pub fn compute_deadline(
    d_ref: f64,
    checkpoint: f64,
    v_c: f64,
    v_v: f64,
    params: &AccParams,
) -> Result<DeadlineResult, AccError> {
    params.validate()?;
    if !(v_v > 0.0) {
        return Err(AccError::Domain(format!(
            "verifier velocity must be positive, got {v_v}"
        )));
    }
    let mut state = ControllerState::at_rest(d_ref, checkpoint, v_c, v_v)?;
    let mut trajectory = vec![log_step(0, &state, params.dt)];
    let mut n = 0;
    while state.delta.abs() >= params.gamma {
        if n == params.max_iters {
            return Err(AccError::NonConvergence { iters: n });
        }
        state = controller_step(&state, checkpoint, params)?;
        n += 1;
        trajectory.push(log_step(n, &state, params.dt));
    }
    Ok(DeadlineResult {
        deadline: n as f64 * params.dt,
        iterations: n,
        trajectory,
        converged: true,
    })
}

/// Deadline under a time-varying verifier speed.
///
/// `verifier_velocity(n)` gives the verifier's speed at step boundary `n`.
/// Because the verifier's braking can push the candidate through the
/// checkpoint, the deadline is the first step after which |δ| stays below γ
/// for the rest of the `max_iters` horizon. For a constant speed this agrees
/// with [`compute_deadline`] whenever the approach does not overshoot.
pub fn compute_deadline_with_profile<F>(
    start_gap: f64,
    checkpoint: f64,
    v_c: f64,
    verifier_velocity: F,
    params: &AccParams,
) -> Result<DeadlineResult, AccError>
where
    F: Fn(usize) -> f64,
{
    params.validate()?;
    let mut state = ControllerState::at_rest(start_gap, checkpoint, v_c, verifier_velocity(0))?;
    let mut trajectory = vec![log_step(0, &state, params.dt)];
    let mut last_outside = if state.delta.abs() >= params.gamma {
        Some(0)
    } else {
        None
    };
    for n in 1..=params.max_iters {
        state = step_with_verifier(&state, checkpoint, params, verifier_velocity(n))?;
        trajectory.push(log_step(n, &state, params.dt));
        if state.delta.abs() >= params.gamma {
            last_outside = Some(n);
        }
    }
    let iterations = match last_outside {
        None => 0,
        Some(n) if n == params.max_iters => {
            return Err(AccError::NonConvergence {
                iters: params.max_iters,
            })
        }
        Some(n) => n + 1,
    };
    trajectory.truncate(iterations + 1);
    Ok(DeadlineResult {
        deadline: iterations as f64 * params.dt,
        iterations,
        trajectory,
        converged: true,
    })
}

/// Runs the recurrence for a fixed duration without stopping at the
/// checkpoint. Used for maneuver plots.
pub fn maneuver_profile(
    d_ref: f64,
    checkpoint: f64,
    velocity: f64,
    params: &AccParams,
    duration: f64,
) -> Result<Vec<DeadlineStep>, AccError> {
    params.validate()?;
    let steps = (duration / params.dt).round() as usize;
    let mut state = ControllerState::at_rest(d_ref, checkpoint, velocity, velocity)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(log_step(0, &state, params.dt));
    for n in 1..=steps {
        state = controller_step(&state, checkpoint, params)?;
        out.push(log_step(n, &state, params.dt));
    }
    Ok(out)
}

/// Kinematic deadline `|d - d_ref| / v_rel + ε`.
pub fn simple_deadline(checkpoint: f64, d_ref: f64, v_rel: f64, epsilon: f64) -> Result<f64, AccError> {
    if !(v_rel > 0.0) {
        return Err(AccError::Domain(format!(
            "relative velocity must be positive, got {v_rel}"
        )));
    }
    if !(epsilon >= 0.0) {
        return Err(AccError::Domain(format!("epsilon must be non-negative, got {epsilon}")));
    }
    Ok((checkpoint - d_ref).abs() / v_rel + epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> AccParams {
        AccParams::default()
    }

    #[test]
    fn desired_acceleration_examples() {
        let a = desired_acceleration(1.4, 0.0, -3.0, 0.4).unwrap();
        assert!((a - 0.857142857).abs() < 1e-6);
        assert_eq!(desired_acceleration(1.5, 0.0, 0.0, 0.4).unwrap(), 0.0);
        let b = desired_acceleration(1.5, 1.0, 0.0, 0.4).unwrap();
        assert!((b + 0.666666667).abs() < 1e-6);
        assert!(desired_acceleration(0.0, 0.0, 1.0, 0.4).is_err());
        assert!(desired_acceleration(-1.0, 0.0, 1.0, 0.4).is_err());
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smoothed_acceleration(0.7, 0.7, 0.1, 0.5).unwrap(), 0.7);
        assert!((smoothed_acceleration(1.2, 0.0, 0.1, 0.5).unwrap() - 0.2).abs() < 1e-12);
        assert!((smoothed_acceleration(0.0, 0.6, 0.1, 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!(smoothed_acceleration(1.0, 0.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let s = ControllerState::at_rest(42.0, 42.0, 30.0, 30.0).unwrap();
        let n = controller_step(&s, 42.0, &table1()).unwrap();
        assert_eq!(n.delta, 0.0);
        assert_eq!(n.prev_accel, 0.0);
        assert_eq!(n.candidate_velocity, 30.0);
    }

    #[test]
    fn first_step_hand_values() {
        let s = ControllerState::at_rest(45.0, 42.0, 30.0, 30.0).unwrap();
        assert_eq!(s.delta, -3.0);
        assert!((s.gap_time - 1.4).abs() < 1e-12);
        let n = controller_step(&s, 42.0, &table1()).unwrap();
        // ẍ_des = 1.2/1.4, ẍ = ẍ_des/6, l = 3 + ẍ/200
        let des = 1.2 / 1.4;
        let acc = des / 6.0;
        assert!((n.prev_accel - acc).abs() < 1e-12);
        assert!((n.prev_accel - 0.1429).abs() < 1e-4);
        assert!((n.delta - (-3.0 + acc * 0.005)).abs() < 1e-12);
        assert!((n.delta + 2.99929).abs() < 1e-5);
        assert!((n.candidate_velocity - (30.0 + acc * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn error_decreases_monotonically_after_transient() {
        let p = table1();
        let mut s = ControllerState::at_rest(45.0, 42.0, 30.0, 30.0).unwrap();
        let mut deltas = vec![s.delta.abs()];
        for _ in 0..400 {
            s = controller_step(&s, 42.0, &p).unwrap();
            deltas.push(s.delta.abs());
        }
        // after the first step the error shrinks every step
        for w in deltas[1..].windows(2) {
            assert!(w[1] < w[0], "{:?}", w);
        }
        assert!(deltas.last().unwrap() < &1e-2);
    }

    #[test]
    fn stalled_candidate() {
        assert!(matches!(
            ControllerState::at_rest(45.0, 42.0, 0.0, 30.0),
            Err(AccError::Stalled { .. })
        ));
        let mut s = ControllerState::at_rest(45.0, 42.0, 30.0, 30.0).unwrap();
        s.candidate_velocity = 0.0;
        assert!(matches!(
            controller_step(&s, 42.0, &table1()),
            Err(AccError::Stalled { .. })
        ));
    }

    #[test]
    fn deadline_table1_maneuver() {
        let r = compute_deadline(45.0, 42.0, 30.0, 30.0, &table1()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 76);
        assert!((r.deadline - 7.6).abs() < 1e-9);
        assert!(r.trajectory.last().unwrap().delta.abs() < 0.3);
    }

    #[test]
    fn deadline_zero_when_already_there() {
        let r = compute_deadline(45.0, 45.0, 30.0, 30.0, &table1()).unwrap();
        assert_eq!(r.deadline, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn smaller_lambda_takes_longer() {
        let slow = compute_deadline(
            45.0,
            42.0,
            30.0,
            30.0,
            &AccParams {
                lambda: 0.1,
                ..table1()
            },
        )
        .unwrap();
        let fast = compute_deadline(45.0, 42.0, 30.0, 30.0, &table1()).unwrap();
        assert!(slow.deadline > fast.deadline);
    }

    #[test]
    fn deadlines_are_asymmetric() {
        let closer = compute_deadline(45.0, 42.0, 30.0, 30.0, &table1()).unwrap();
        let farther = compute_deadline(45.0, 48.0, 30.0, 30.0, &table1()).unwrap();
        assert_ne!(closer.deadline, farther.deadline);
    }

    #[test]
    fn larger_gamma_never_lengthens_deadline() {
        let mut last = f64::INFINITY;
        for g in [0.1, 0.2, 0.3, 0.5, 1.0] {
            let d = compute_deadline(45.0, 42.0, 30.0, 30.0, &AccParams { gamma: g, ..table1() })
                .unwrap()
                .deadline;
            assert!(d <= last);
            last = d;
        }
    }

    #[test]
    fn every_table1_checkpoint_converges() {
        let p = table1();
        for i in 0..51 {
            let d = 30.0 + 0.6 * i as f64;
            let r = compute_deadline(45.0, d, 30.0, 30.0, &p).unwrap();
            assert!(r.iterations < p.max_iters);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = AccParams {
            max_iters: 10,
            ..table1()
        };
        assert_eq!(
            compute_deadline(45.0, 42.0, 30.0, 30.0, &p),
            Err(AccError::NonConvergence { iters: 10 })
        );
    }

    #[test]
    fn profile_deadline_matches_constant_speed() {
        let p = table1();
        for d in [30.0, 36.0, 42.0, 44.4, 45.6, 51.0, 60.0] {
            let a = compute_deadline(45.0, d, 30.0, 30.0, &p).unwrap();
            let b = compute_deadline_with_profile(45.0, d, 30.0, |_| 30.0, &p).unwrap();
            assert_eq!(a.iterations, b.iterations, "checkpoint {d}");
        }
    }

    #[test]
    fn braking_verifier_extends_settling() {
        let p = table1();
        // verifier slows from 30 to 27 m/s at 0.5 m/s² starting 3 s in
        let profile = |n: usize| {
            let t = n as f64 * 0.1;
            (30.0 - 0.5 * (t - 3.0).max(0.0)).max(27.0)
        };
        let r = compute_deadline_with_profile(45.0, 42.0, 30.0, profile, &p).unwrap();
        assert!(r.deadline > 10.0, "{}", r.deadline);
    }

    #[test]
    fn simple_deadline_examples() {
        assert!((simple_deadline(42.0, 45.0, 1.0, 0.5).unwrap() - 3.5).abs() < 1e-12);
        assert_eq!(simple_deadline(45.0, 45.0, 1.0, 0.0).unwrap(), 0.0);
        assert!((simple_deadline(60.0, 45.0, 3.0, 1.0).unwrap() - 6.0).abs() < 1e-12);
        assert!(simple_deadline(60.0, 45.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn peak_velocity_differential_of_table1_maneuver() {
        let steps = maneuver_profile(45.0, 42.0, 30.0, &table1(), 30.0).unwrap();
        let peak = steps
            .iter()
            .map(|s| (s.candidate_velocity - 30.0).abs())
            .fold(0.0, f64::max);
        // the smoothed law keeps the maneuver gentle
        assert!(peak < 0.75, "{peak}");
        assert!(peak > 0.5, "{peak}");
    }
}
