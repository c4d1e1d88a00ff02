//! Candidate side: flying a challenge schedule with the ACC law.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acc::{AccError, AccParams, ControllerState};
use crate::challenge::ChallengeSet;
use crate::kinematics::{integrate_step, ActuatorLimits, KinematicsError, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecutionError {
    #[error(transparent)]
    Controller(#[from] AccError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("gap {gap:.2} m below the safety floor {floor:.2} m at t={time:.1} s")]
    SafetyViolation { time: f64, gap: f64, floor: f64 },
}

pub fn tick_of(time: f64, dt: f64) -> i64 {
    (time / dt).round() as i64
}

/// Tracks which entry of Γ is active at a given tick and turns the current
/// gap into an acceleration command.
#[derive(Debug, Clone)]
pub struct ChallengeExecutor {
    d_ref: f64,
    acc: AccParams,
    schedule: Option<ChallengeSet>,
    ticks: Vec<i64>,
    suspended_from: Option<usize>,
    version: u64,
    segment: Option<(u64, usize)>,
    gap_time: f64,
    prev_accel: f64,
}

impl ChallengeExecutor {
    pub fn new(d_ref: f64, acc: AccParams) -> Self {
        Self {
            d_ref,
            acc,
            schedule: None,
            ticks: Vec::new(),
            suspended_from: None,
            version: 0,
            segment: None,
            gap_time: 0.0,
            prev_accel: 0.0,
        }
    }

    pub fn load(&mut self, gamma: ChallengeSet) {
        self.ticks = gamma
            .entries
            .iter()
            .map(|e| tick_of(e.absolute_time, self.acc.dt))
            .collect();
        self.schedule = Some(gamma);
        self.suspended_from = None;
        self.version += 1;
    }

    /// Keep regulating toward entry `index` until a new schedule is loaded.
    pub fn suspend(&mut self, index: usize) {
        self.suspended_from = Some(index);
    }

    pub fn schedule(&self) -> Option<&ChallengeSet> {
        self.schedule.as_ref()
    }

    /// Index into Γ of the entry being flown at `tick`, or `None` outside
    /// the schedule.
    pub fn active_entry(&self, tick: i64) -> Option<usize> {
        let sched = self.schedule.as_ref()?;
        if tick < self.ticks[0] {
            return None;
        }
        let k = (1..sched.entries.len()).find(|&k| self.ticks[k] > tick)?;
        Some(self.suspended_from.map_or(k, |s| k.min(s)))
    }

    pub fn target_at(&self, tick: i64) -> f64 {
        match (self.active_entry(tick), &self.schedule) {
            (Some(k), Some(s)) => s.entries[k].distance,
            _ => self.d_ref,
        }
    }

    /// Acceleration command for this tick.
    pub fn command(&mut self, tick: i64, gap: f64, v_c: f64, v_v: f64) -> Result<f64, AccError> {
        let target = self.target_at(tick);
        let segment = (self.version, self.active_entry(tick).unwrap_or(usize::MAX));
        if self.segment != Some(segment) {
            let fresh = ControllerState::begin(gap, target, v_c, v_v, self.prev_accel)?;
            self.gap_time = fresh.gap_time;
            self.segment = Some(segment);
        }
        if !(v_c > 0.0) {
            return Err(AccError::Stalled { checkpoint: target });
        }
        let state = ControllerState {
            prev_accel: self.prev_accel,
            delta: target - gap,
            candidate_velocity: v_c,
            verifier_velocity: v_v,
            gap_time: self.gap_time,
        };
        let a = state.command(&self.acc)?;
        self.prev_accel = a;
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSample {
    pub time: f64,
    pub gap: f64,
    pub target: f64,
    pub candidate_velocity: f64,
    pub verifier_velocity: f64,
    pub candidate_accel: f64,
}

/// Flies Γ behind a verifier whose speed follows `verifier_velocity(t)`,
/// starting at `t0` at gap `start_gap` and running until `until`.
///
/// Stops with [`ExecutionError::SafetyViolation`] if the gap ever drops
/// below `g_min·v_V - γ`.
pub fn execute_challenges(
    gamma: &ChallengeSet,
    acc: &AccParams,
    start_gap: f64,
    verifier_velocity: impl Fn(f64) -> f64,
    g_min: f64,
    until: f64,
) -> Result<Vec<ExecutionSample>, ExecutionError> {
    acc.validate()?;
    let dt = acc.dt;
    let limits = ActuatorLimits::default();
    let mut exec = ChallengeExecutor::new(gamma.d_ref(), *acc);
    exec.load(gamma.clone());
    let t_start = gamma.t0;
    let mut v = VehicleState::new(start_gap, verifier_velocity(t_start), 0);
    let mut c = VehicleState::new(0.0, verifier_velocity(t_start), 0);
    let mut out = Vec::new();
    let mut tick = tick_of(t_start, dt);
    loop {
        let time = tick as f64 * dt;
        let gap = v.position - c.position;
        let floor = g_min * v.velocity - acc.gamma;
        if gap < floor {
            return Err(ExecutionError::SafetyViolation { time, gap, floor });
        }
        let target = exec.target_at(tick);
        let a = exec.command(tick, gap, c.velocity, v.velocity)?;
        out.push(ExecutionSample {
            time,
            gap,
            target,
            candidate_velocity: c.velocity,
            verifier_velocity: v.velocity,
            candidate_accel: a,
        });
        if time >= until {
            break;
        }
        let v_next = verifier_velocity(time + dt);
        let a_v = (v_next - v.velocity) / dt;
        v = integrate_step(
            &v,
            a_v,
            dt,
            ActuatorLimits {
                max_accel: f64::INFINITY,
            },
        )?;
        v.velocity = v_next;
        c = integrate_step(&c, a, dt, limits)?;
        tick += 1;
    }
    Ok(out)
}
