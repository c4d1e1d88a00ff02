//! Scenario configuration. Defaults reproduce the reference freeway setup
//! (30 m/s, 1.5 s following gap, 1–2 s checkpoint range).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acc::AccParams;
use crate::challenge::{build_checkpoint_space, centered_time_gaps, AdjustPolicy, CheckpointSpace, DeadlinePolicy};
use crate::kinematics::RangeSensor;
use crate::security::RandomWalkModel;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Candidate physically follows and executes the challenges.
    Honest,
    /// Remote adversary, nothing behind the verifier.
    RemoteNoFollower,
    /// Remote adversary, an unrelated vehicle R wanders behind the verifier.
    RemoteWithR,
    /// Man in the middle; the candidate only accepts the verifier's key.
    MitmKnown,
    /// Man in the middle; the candidate accepts any certified platoon.
    MitmUnknown,
    /// Honest candidate; a slower vehicle cuts in ahead of the verifier.
    Traffic,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Honest,
        ScenarioKind::RemoteNoFollower,
        ScenarioKind::RemoteWithR,
        ScenarioKind::MitmKnown,
        ScenarioKind::MitmUnknown,
        ScenarioKind::Traffic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Honest => "honest",
            ScenarioKind::RemoteNoFollower => "remote-no-follower",
            ScenarioKind::RemoteWithR => "remote-with-r",
            ScenarioKind::MitmKnown => "mitm-known",
            ScenarioKind::MitmUnknown => "mitm-unknown",
            ScenarioKind::Traffic => "traffic",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| HarnessError::Config(format!("unknown scenario kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjustChoice {
    None,
    Repeat,
    Recompute,
}

impl AdjustChoice {
    pub fn policy(self) -> Option<AdjustPolicy> {
        match self {
            AdjustChoice::None => None,
            AdjustChoice::Repeat => Some(AdjustPolicy::Repeat),
            AdjustChoice::Recompute => Some(AdjustPolicy::Recompute),
        }
    }
}

impl FromStr for AdjustChoice {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(AdjustChoice::None),
            "repeat" => Ok(AdjustChoice::Repeat),
            "recompute" => Ok(AdjustChoice::Recompute),
            _ => Err(HarnessError::Config(format!("unknown adjustment policy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadlineChoice {
    Acc,
    Simple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    #[serde(rename = "v_V")]
    pub v_v: f64,
    #[serde(rename = "v_C")]
    pub v_c: f64,
    /// Defaults to 1.5·v_C.
    pub d_ref: Option<f64>,
    pub g_min: f64,
    pub g_max: f64,
    pub rho: f64,
    /// Checkpoint count; when set, replaces `g_min`/`g_max` by a range of
    /// exactly M checkpoints centered on `d_ref`.
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub dt: f64,
    pub lambda: f64,
    pub tau: f64,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub deadline_policy: DeadlineChoice,
    pub v_rel: f64,
    pub adjust: AdjustChoice,
    pub stability_threshold: f64,
    pub stability_window: f64,
    /// Fixed checkpoint sequence instead of random draws.
    pub checkpoints: Option<Vec<f64>>,
    pub sigma: f64,
    pub resolution: f64,
    pub max_range: f64,
    pub max_accel: f64,
    pub latency: f64,
    pub sync_delay: f64,
    pub request_time: f64,
    pub lead_gap: f64,
    pub lead_velocity: f64,
    pub lead_headway: f64,
    /// Walk spacing of R; defaults to 2ρ.
    pub walk_step: Option<f64>,
    pub walk_step_duration: f64,
    pub max_time: f64,
    pub record_trace: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Honest,
            seed: 1,
            v_v: 30.0,
            v_c: 30.0,
            d_ref: None,
            g_min: 1.0,
            g_max: 2.0,
            rho: 0.3,
            m: None,
            dt: 0.1,
            lambda: 0.4,
            tau: 0.5,
            gamma: 0.3,
            k: 5,
            epsilon: 1.0,
            max_iters: 600,
            deadline_policy: DeadlineChoice::Acc,
            v_rel: 1.0,
            adjust: AdjustChoice::None,
            stability_threshold: 0.1,
            stability_window: 1.0,
            checkpoints: None,
            sigma: 0.0,
            resolution: 0.3,
            max_range: 150.0,
            max_accel: 4.0,
            latency: 0.1,
            sync_delay: 1.0,
            request_time: 1.0,
            lead_gap: 58.0,
            lead_velocity: 27.0,
            lead_headway: 1.5,
            walk_step: None,
            walk_step_duration: 1.0,
            max_time: 900.0,
            record_trace: true,
        }
    }
}

fn ticks(seconds: f64, dt: f64) -> Result<i64, HarnessError> {
    let t = seconds / dt;
    if (t - t.round()).abs() > 1e-6 {
        return Err(HarnessError::Config(format!(
            "{seconds} s is not a whole number of {dt} s ticks"
        )));
    }
    Ok(t.round() as i64)
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn d_ref(&self) -> f64 {
        self.d_ref.unwrap_or(1.5 * self.v_c)
    }

    /// Time-gap bounds after applying `M`.
    pub fn time_gaps(&self) -> (f64, f64) {
        match self.m {
            Some(1) => {
                let g = self.d_ref() / self.v_v;
                (g, g + 1e-6)
            }
            Some(m) => centered_time_gaps(self.d_ref(), m, self.rho, self.v_v),
            None => (self.g_min, self.g_max),
        }
    }

    pub fn checkpoint_space(&self) -> Result<CheckpointSpace, HarnessError> {
        let (lo, hi) = self.time_gaps();
        Ok(build_checkpoint_space(self.v_v, lo, hi, self.rho)?)
    }

    pub fn acc_params(&self) -> AccParams {
        AccParams {
            lambda: self.lambda,
            tau: self.tau,
            dt: self.dt,
            gamma: self.gamma,
            max_iters: self.max_iters,
        }
    }

    pub fn deadline_policy(&self) -> DeadlinePolicy {
        match self.deadline_policy {
            DeadlineChoice::Acc => DeadlinePolicy::AccModel,
            DeadlineChoice::Simple => DeadlinePolicy::Simple { v_rel: self.v_rel },
        }
    }

    pub fn sensor(&self) -> Result<RangeSensor, HarnessError> {
        RangeSensor::new(self.resolution, self.sigma, self.max_range).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// R's walk over the checkpoint range.
    pub fn walk_model(&self) -> Result<RandomWalkModel, HarnessError> {
        let space = self.checkpoint_space()?;
        let step = self.walk_step.unwrap_or(2.0 * self.rho);
        let lo = space.checkpoints[0];
        let hi = *space.checkpoints.last().expect("non-empty");
        if space.len() == 1 {
            return Ok(RandomWalkModel::new(2, lo, step)?);
        }
        Ok(RandomWalkModel::from_range(lo, hi, step)?)
    }

    pub fn latency_ticks(&self) -> i64 {
        ticks(self.latency, self.dt).unwrap_or(1).max(1)
    }

    pub fn walk_step_ticks(&self) -> Result<usize, HarnessError> {
        let t = ticks(self.walk_step_duration, self.dt)?;
        if t < 1 {
            return Err(HarnessError::Config(
                "walk_step_duration must be at least one tick".into(),
            ));
        }
        Ok(t as usize)
    }

    /// Tick at which the challenge starts: the request goes out at
    /// `request_time`, takes one latency to arrive, and both sides then
    /// wait `sync_delay` before t_0.
    pub fn t0_tick(&self) -> i64 {
        self.request_tick() + self.latency_ticks() + ticks(self.sync_delay, self.dt).unwrap_or(0)
    }

    pub fn request_tick(&self) -> i64 {
        ticks(self.request_time, self.dt).unwrap_or(0)
    }

    pub fn max_ticks(&self) -> i64 {
        (self.max_time / self.dt).ceil() as i64
    }

    /// Reports inconsistencies before anything is simulated.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        for (name, v) in [
            ("v_V", self.v_v),
            ("v_C", self.v_c),
            ("dt", self.dt),
            ("rho", self.rho),
            ("gamma", self.gamma),
            ("max_accel", self.max_accel),
            ("max_range", self.max_range),
            ("resolution", self.resolution),
            ("latency", self.latency),
            ("walk_step_duration", self.walk_step_duration),
            ("max_time", self.max_time),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.epsilon >= 0.0) || !(self.sigma >= 0.0) || !(self.sync_delay >= 0.0) || !(self.request_time >= 0.0) {
            return bad("epsilon, sigma, sync_delay and request_time must be non-negative".into());
        }
        if self.m == Some(0) {
            return bad("M must be at least 1".into());
        }
        self.acc_params().validate()?;
        for (name, v) in [
            ("latency", self.latency),
            ("sync_delay", self.sync_delay),
            ("request_time", self.request_time),
            ("epsilon", self.epsilon),
            ("walk_step_duration", self.walk_step_duration),
        ] {
            ticks(v, self.dt)
                .map_err(|_| HarnessError::Config(format!("{name}={v} is not a multiple of dt={}", self.dt)))?;
        }
        if self.sync_delay < self.latency {
            return bad("sync_delay must cover at least one message latency".into());
        }
        let space = self.checkpoint_space()?;
        let d_ref = self.d_ref();
        if d_ref < space.range.0 - 1e-9 || d_ref > space.range.1 + 1e-9 {
            return bad(format!(
                "d_ref {d_ref} outside the checkpoint range [{}, {}]",
                space.range.0, space.range.1
            ));
        }
        if let Some(cps) = &self.checkpoints {
            if cps.len() != self.k {
                return bad(format!("{} fixed checkpoints given for K={}", cps.len(), self.k));
            }
            if let Some(c) = cps.iter().find(|c| !space.contains(**c)) {
                return bad(format!("fixed checkpoint {c} is not in the checkpoint space"));
            }
        }
        if self.deadline_policy == DeadlineChoice::Simple && !(self.v_rel > 0.0) {
            return bad("v_rel must be positive for the simple deadline policy".into());
        }
        if self.scenario == ScenarioKind::Traffic
            && !(self.lead_velocity > 0.0 && self.lead_gap > 0.0 && self.lead_headway > 0.0)
        {
            return bad("lead vehicle parameters must be positive".into());
        }
        if self.scenario == ScenarioKind::RemoteWithR {
            self.walk_model()?;
            self.walk_step_ticks()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_setup() {
        let c = ScenarioConfig::default();
        assert_eq!(c.d_ref(), 45.0);
        assert_eq!(c.checkpoint_space().unwrap().len(), 51);
        assert_eq!((c.v_v, c.dt, c.lambda, c.gamma, c.rho), (30.0, 0.1, 0.4, 0.3, 0.3));
        c.validate().unwrap();
        assert_eq!(c.t0_tick(), 21);
    }

    #[test]
    fn toml_uses_symbol_names() {
        let c = ScenarioConfig::from_toml(
            "scenario = \"traffic\"\nK = 1\nlambda = 0.1\nv_V = 30.0\ncheckpoints = [42.0]\nadjust = \"recompute\"\n",
        )
        .unwrap();
        assert_eq!(c.scenario, ScenarioKind::Traffic);
        assert_eq!(c.k, 1);
        assert_eq!(c.lambda, 0.1);
        assert_eq!(c.adjust, AdjustChoice::Recompute);
        c.validate().unwrap();
        assert!(ScenarioConfig::from_toml("lamda = 0.1").is_err());
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let mut c = ScenarioConfig {
            d_ref: Some(70.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = ScenarioConfig {
            checkpoints: Some(vec![42.0]),
            k: 2,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = ScenarioConfig {
            checkpoints: Some(vec![42.1]),
            k: 1,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = ScenarioConfig {
            dt: -0.1,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c = ScenarioConfig {
            epsilon: 0.55,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn m_override_centers_the_range() {
        for m in [1, 11, 31, 51] {
            let c = ScenarioConfig {
                m: Some(m),
                ..Default::default()
            };
            let s = c.checkpoint_space().unwrap();
            assert_eq!(s.len(), m);
            assert!(s.contains(45.0));
        }
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("nope".parse::<ScenarioKind>().is_err());
    }
}
