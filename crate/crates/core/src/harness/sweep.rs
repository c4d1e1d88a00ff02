//! Repeated-seed parameter sweeps and the follower-attack pass-rate table.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::challenge::segment_deadline;
use crate::protocol::execution::tick_of;
use crate::security::{
    deadline_to_steps, exact_passing_probability, guess_bound, passing_probability, steady_state_approx,
    MonteCarloEstimate, ScheduleOracle,
};

use super::config::{ScenarioConfig, ScenarioKind};
use super::engine::run_scenario;
use super::HarnessError;

/// Seeds per grid point unless the caller asks for more.
pub const DEFAULT_SEEDS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    K,
    M,
    Lambda,
    Gamma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::K => "K",
            SweepParam::M => "M",
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, HarnessError> {
        let count = || {
            if value < 0.0 || value.fract() != 0.0 {
                Err(HarnessError::Config(format!(
                    "{} must be a whole number, got {value}",
                    self.name()
                )))
            } else {
                Ok(value as usize)
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepParam::K => {
                cfg.k = count()?;
                cfg.checkpoints = None;
            }
            SweepParam::M => cfg.m = Some(count()?),
            SweepParam::Lambda => cfg.lambda = value,
            SweepParam::Gamma => cfg.gamma = value,
        }
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "K" | "k" => Ok(SweepParam::K),
            "M" | "m" => Ok(SweepParam::M),
            "lambda" => Ok(SweepParam::Lambda),
            "gamma" => Ok(SweepParam::Gamma),
            _ => Err(HarnessError::Config(format!(
                "cannot sweep '{s}' (expected K, M, lambda or gamma)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub runs: usize,
    pub accepted: usize,
    /// Mean and sample standard deviation of t_{K+1} − t_0 over runs that
    /// reached a verdict.
    pub mean_time: f64,
    pub std_time: f64,
    pub pass_rate: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every grid point over seeds `base.seed .. base.seed + seeds`.
/// Rows come back in grid order.
pub fn run_sweep(
    base: &ScenarioConfig,
    param: SweepParam,
    grid: &[f64],
    seeds: usize,
) -> Result<Vec<SweepRow>, HarnessError> {
    if grid.is_empty() || seeds == 0 {
        return Err(HarnessError::Config(
            "sweep needs a non-empty grid and at least one seed".into(),
        ));
    }
    let configs: Vec<ScenarioConfig> = grid
        .iter()
        .map(|&v| {
            let mut c = param.apply(base, v)?;
            c.record_trace = false;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_, HarnessError>>()?;
    let jobs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|g| (0..seeds as u64).map(move |s| (g, s)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(g, s)| {
            let cfg = ScenarioConfig {
                seed: base.seed.wrapping_add(s),
                ..configs[g].clone()
            };
            run_scenario(&cfg).map(|r| (r.accepted(), r.verification_time))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(grid
        .iter()
        .zip(results.chunks(seeds))
        .map(|(&value, chunk)| {
            let times: Vec<f64> = chunk.iter().filter_map(|r| r.1).collect();
            let accepted = chunk.iter().filter(|r| r.0).count();
            let (mean_time, std_time) = mean_std(&times);
            SweepRow {
                param,
                value,
                runs: chunk.len(),
                accepted,
                mean_time,
                std_time,
                pass_rate: accepted as f64 / chunk.len() as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityRow {
    pub k: usize,
    /// Walk states.
    pub n: usize,
    /// Checkpoints.
    pub m: usize,
    pub trials: usize,
    /// Episodes in which R sat on every one of the K drawn checkpoints.
    pub interior: MonteCarloEstimate,
    /// Episodes the verifier actually accepted (d_ref at both ends too).
    pub verdict: MonteCarloEstimate,
    /// Product of per-challenge marginals at the mean step count.
    pub marginal_product: f64,
    /// Joint forward pass at the mean step count.
    pub exact_forward: f64,
    /// Joint probability on the actual tick schedule, interior only.
    pub schedule_interior: f64,
    /// Same, including the two d_ref entries.
    pub schedule_verdict: f64,
    pub guess_bound: f64,
    pub steady_state: f64,
    /// Mean walk steps per challenge used by the fixed-step formulas.
    pub steps: usize,
}

/// Exact oracle matching the engine's schedule for `cfg`.
pub fn schedule_oracle(cfg: &ScenarioConfig) -> Result<ScheduleOracle, HarnessError> {
    let space = cfg.checkpoint_space()?;
    let mut points = space.checkpoints.clone();
    points.push(cfg.d_ref());
    let acc = cfg.acc_params();
    let policy = cfg.deadline_policy();
    let interval = points
        .par_iter()
        .map(|&a| {
            points
                .iter()
                .map(|&b| {
                    let d = segment_deadline(a, b, cfg.v_v, policy, &acc)?;
                    Ok(tick_of(d + cfg.epsilon, cfg.dt) as usize)
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScheduleOracle {
        walk: cfg.walk_model()?,
        points,
        interval,
        t0_tick: cfg.t0_tick() as usize,
        step_ticks: cfg.walk_step_ticks()?,
        gamma: cfg.gamma,
    })
}

/// Full-scenario follower attack for each K, next to the analytical values.
pub fn run_security_sweep(
    base: &ScenarioConfig,
    k_grid: &[usize],
    trials: usize,
) -> Result<Vec<SecurityRow>, HarnessError> {
    if k_grid.is_empty() || trials == 0 {
        return Err(HarnessError::Config(
            "security sweep needs a non-empty K grid and trials".into(),
        ));
    }
    let mut cfg = base.clone();
    cfg.scenario = ScenarioKind::RemoteWithR;
    cfg.record_trace = false;
    cfg.checkpoints = None;
    cfg.validate()?;
    let oracle = schedule_oracle(&cfg)?;
    let model = oracle.walk;
    let p = model.transition_matrix();
    let m = oracle.points.len() - 1;
    let states: Vec<usize> = oracle.points[..m].iter().map(|&c| model.nearest_state(c)).collect();
    // mean interval between two uniformly drawn checkpoints
    let mean_ticks = oracle.interval[..m]
        .iter()
        .flat_map(|row| row[..m].iter())
        .sum::<usize>() as f64
        / (m * m) as f64;
    let steps = deadline_to_steps(mean_ticks * cfg.dt, cfg.walk_step_duration);

    k_grid
        .iter()
        .map(|&k| {
            let run_cfg = ScenarioConfig { k, ..cfg.clone() };
            let outcomes = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let r = run_scenario(&ScenarioConfig {
                        seed: run_cfg.seed.wrapping_add(t),
                        ..run_cfg.clone()
                    })?;
                    Ok((r.interior_passed(), r.accepted()))
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            let interior = outcomes.iter().filter(|o| o.0).count();
            let verdict = outcomes.iter().filter(|o| o.1).count();
            let step_list = vec![steps; k];
            Ok(SecurityRow {
                k,
                n: model.n,
                m,
                trials,
                interior: MonteCarloEstimate::from_counts(interior, trials),
                verdict: MonteCarloEstimate::from_counts(verdict, trials),
                marginal_product: passing_probability(&p, &states, &step_list)?,
                exact_forward: exact_passing_probability(&p, &states, &step_list)?,
                schedule_interior: oracle.passing_probability(&p, k, false)?,
                schedule_verdict: oracle.passing_probability(&p, k, true)?,
                guess_bound: guess_bound(m, k),
                steady_state: steady_state_approx(model.n, k),
                steps,
            })
        })
        .collect()
}
