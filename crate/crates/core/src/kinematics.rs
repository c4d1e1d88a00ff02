//! Longitudinal vehicle motion on a single road axis and the verifier's
//! rear-facing range sensor.
//!
//! Positions grow in the direction of travel, so a vehicle "behind" the
//! verifier has a smaller position. Lanes are discrete indices.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default actuator bound in m/s².
pub const DEFAULT_MAX_ACCEL: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("invalid vehicle state: {0}")]
    InvalidState(String),
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("invalid sensor configuration: {0}")]
    InvalidSensor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Meters along the road axis.
    pub position: f64,
    /// m/s, never negative.
    pub velocity: f64,
    /// m/s², the acceleration applied during the last step.
    pub acceleration: f64,
    pub lane: i32,
}

impl VehicleState {
    pub fn new(position: f64, velocity: f64, lane: i32) -> Self {
        Self {
            position,
            velocity,
            acceleration: 0.0,
            lane,
        }
    }

    fn check(&self) -> Result<(), KinematicsError> {
        if !self.position.is_finite() || !self.velocity.is_finite() || !self.acceleration.is_finite() {
            return Err(KinematicsError::InvalidState(format!("non-finite field in {self:?}")));
        }
        if self.velocity < 0.0 {
            return Err(KinematicsError::InvalidState(format!(
                "negative velocity {}",
                self.velocity
            )));
        }
        Ok(())
    }
}

/// Symmetric bound on the commanded acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorLimits {
    pub max_accel: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            max_accel: DEFAULT_MAX_ACCEL,
        }
    }
}

/// Advances `state` by one step of length `dt` under the commanded
/// acceleration.
///
/// The command is clamped to the actuator bound. Vehicles never reverse: if
/// the velocity would cross zero inside the step the vehicle stops at the
/// point where it reaches zero speed.
pub fn integrate_step(
    state: &VehicleState,
    accel_cmd: f64,
    dt: f64,
    limits: ActuatorLimits,
) -> Result<VehicleState, KinematicsError> {
    state.check()?;
    if !accel_cmd.is_finite() {
        return Err(KinematicsError::InvalidState(format!(
            "non-finite acceleration command {accel_cmd}"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(KinematicsError::InvalidStep(dt));
    }
    let a = accel_cmd.clamp(-limits.max_accel, limits.max_accel);
    let v_next = state.velocity + a * dt;
    let (position, velocity) = if v_next >= 0.0 {
        (state.position + state.velocity * dt + 0.5 * a * dt * dt, v_next)
    } else {
        // a < 0 here; distance covered until standstill
        (state.position + state.velocity * state.velocity / (-2.0 * a), 0.0)
    };
    Ok(VehicleState {
        position,
        velocity,
        acceleration: a,
        lane: state.lane,
    })
}

/// Rear-facing ranging sensor mounted on the verifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSensor {
    /// Resolution ρ in meters; readings are multiples of it.
    pub resolution: f64,
    pub noise_sigma: f64,
    pub max_range: f64,
}

impl RangeSensor {
    pub fn new(resolution: f64, noise_sigma: f64, max_range: f64) -> Result<Self, KinematicsError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(KinematicsError::InvalidSensor(format!("resolution {resolution}")));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(KinematicsError::InvalidSensor(format!("noise sigma {noise_sigma}")));
        }
        if !(max_range > 0.0) {
            return Err(KinematicsError::InvalidSensor(format!("max range {max_range}")));
        }
        Ok(Self {
            resolution,
            noise_sigma,
            max_range,
        })
    }

    /// Rounds a raw distance to the nearest multiple of the resolution.
    pub fn quantize(&self, raw: f64) -> f64 {
        (raw / self.resolution).round() * self.resolution
    }
}

impl Default for RangeSensor {
    fn default() -> Self {
        Self {
            resolution: 0.3,
            noise_sigma: 0.0,
            max_range: 150.0,
        }
    }
}

/// Distance to the nearest vehicle directly behind the verifier in its lane.
///
/// `scene` may include the verifier itself; entries at or ahead of the
/// verifier's position are ignored. The RNG is only consumed when the sensor
/// is noisy.
pub fn measure_range<R: Rng + ?Sized>(
    verifier: &VehicleState,
    scene: &[VehicleState],
    sensor: &RangeSensor,
    rng: &mut R,
) -> Option<f64> {
    let nearest = scene
        .iter()
        .filter(|v| v.lane == verifier.lane)
        .map(|v| verifier.position - v.position)
        .filter(|gap| *gap > 0.0 && *gap <= sensor.max_range)
        .min_by(|a, b| a.total_cmp(b))?;
    let raw = if sensor.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, sensor.noise_sigma).expect("validated sigma");
        (nearest + noise.sample(rng)).max(0.0)
    } else {
        nearest
    };
    Some(sensor.quantize(raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteSample {
    pub position: f64,
    pub lane: i32,
    pub time: f64,
}

/// Time-ordered positions of one vehicle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteTrace {
    samples: Vec<RouteSample>,
}

impl RouteTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample; timestamps must be strictly increasing.
    pub fn push(&mut self, sample: RouteSample) -> Result<(), KinematicsError> {
        if let Some(last) = self.samples.last() {
            if !(sample.time > last.time) {
                return Err(KinematicsError::InvalidState(format!(
                    "route timestamps must increase: {} after {}",
                    sample.time, last.time
                )));
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn samples(&self) -> &[RouteSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
