//! CSV writers. Every file has one header row; floats carry 9 significant
//! digits so that reruns produce identical bytes.

use std::fs::File;
use std::path::Path;

use crate::acc::{maneuver_profile, AccError, AccParams};

use super::engine::{ScenarioResult, TraceRow};
use super::sweep::{SecurityRow, SweepRow};
use super::HarnessError;

pub const TRACES_HEADER: &[&str] = &[
    "tick",
    "time",
    "vehicle",
    "lane",
    "position",
    "velocity",
    "acceleration",
    "gap_to_verifier",
];
pub const CHALLENGES_HEADER: &[&str] = &[
    "index",
    "distance",
    "deadline",
    "original_time",
    "scheduled_time",
    "adjusted",
    "measured",
    "error",
    "passed",
    "model_completion",
];
pub const MESSAGES_HEADER: &[&str] = &["tick", "time", "from", "to", "kind", "delivered", "length", "bytes"];
pub const RESULT_HEADER: &[&str] = &[
    "scenario",
    "seed",
    "K",
    "outcome",
    "candidate_outcome",
    "admitted",
    "t0",
    "end_time",
    "verification_time",
    "interior_passed",
];
pub const SWEEP_HEADER: &[&str] = &[
    "param",
    "value",
    "runs",
    "accepted",
    "pass_rate",
    "mean_time",
    "std_time",
];
pub const SECURITY_HEADER: &[&str] = &[
    "K",
    "N",
    "M",
    "trials",
    "interior_passes",
    "interior_rate",
    "interior_se",
    "verdict_passes",
    "verdict_rate",
    "verdict_se",
    "marginal_product",
    "exact_forward",
    "schedule_interior",
    "schedule_verdict",
    "guess_bound",
    "steady_state",
    "steps",
];
pub const MANEUVER_HEADER: &[&str] = &["lambda", "time", "acceleration", "velocity", "distance"];

/// 9 significant digits, plain notation where that stays short.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-4..1e9).contains(&a) {
        let decimals = (8 - a.log10().floor() as i32).max(0) as usize;
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn flag(b: bool) -> String {
    (b as u8).to_string()
}

fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write as _;
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn write_traces(path: &Path, trace: &[TraceRow]) -> Result<(), HarnessError> {
    write_table(
        path,
        TRACES_HEADER,
        trace.iter().map(|r| {
            vec![
                r.tick.to_string(),
                fmt_f64(r.time),
                r.vehicle.to_string(),
                r.lane.to_string(),
                fmt_f64(r.position),
                fmt_f64(r.velocity),
                fmt_f64(r.acceleration),
                opt(r.gap),
            ]
        }),
    )
}

pub fn write_challenges(path: &Path, result: &ScenarioResult) -> Result<(), HarnessError> {
    write_table(
        path,
        CHALLENGES_HEADER,
        result.challenges.iter().map(|c| {
            vec![
                c.index.to_string(),
                fmt_f64(c.distance),
                fmt_f64(c.deadline),
                fmt_f64(c.original_time),
                fmt_f64(c.scheduled_time),
                flag((c.scheduled_time - c.original_time).abs() > 1e-9),
                opt(c.measured),
                opt(c.measured.map(|m| m - c.distance)),
                flag(c.passed),
                opt(c.model_completion),
            ]
        }),
    )
}

pub fn write_messages(path: &Path, result: &ScenarioResult, dt: f64) -> Result<(), HarnessError> {
    write_table(
        path,
        MESSAGES_HEADER,
        result.messages.iter().map(|m| {
            vec![
                m.tick.to_string(),
                fmt_f64(m.tick as f64 * dt),
                m.from.name().to_string(),
                m.to.name().to_string(),
                m.kind.to_string(),
                flag(m.delivered),
                m.bytes.len().to_string(),
                hex(&m.bytes),
            ]
        }),
    )
}

pub fn write_result(path: &Path, result: &ScenarioResult) -> Result<(), HarnessError> {
    let g = result.gamma.as_ref();
    let row = vec![
        result.kind.to_string(),
        result.seed.to_string(),
        g.map(|g| g.k().to_string()).unwrap_or_default(),
        result.outcome.label(),
        result.candidate_outcome.as_ref().map(|o| o.label()).unwrap_or_default(),
        result.admitted.clone().unwrap_or_default(),
        opt(g.map(|g| g.t0)),
        opt(g.map(|g| g.end_time())),
        opt(result.verification_time),
        flag(result.interior_passed()),
    ];
    write_table(path, RESULT_HEADER, [row])
}

/// Writes traces.csv, challenges.csv, messages.csv and result.csv into `dir`.
pub fn write_scenario(dir: &Path, result: &ScenarioResult, dt: f64) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_traces(&dir.join("traces.csv"), &result.trace)?;
    write_challenges(&dir.join("challenges.csv"), result)?;
    write_messages(&dir.join("messages.csv"), result, dt)?;
    write_result(&dir.join("result.csv"), result)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    write_table(
        path,
        SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                r.param.to_string(),
                fmt_f64(r.value),
                r.runs.to_string(),
                r.accepted.to_string(),
                fmt_f64(r.pass_rate),
                fmt_f64(r.mean_time),
                fmt_f64(r.std_time),
            ]
        }),
    )
}

pub fn write_security(path: &Path, rows: &[SecurityRow]) -> Result<(), HarnessError> {
    write_table(
        path,
        SECURITY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.n.to_string(),
                r.m.to_string(),
                r.trials.to_string(),
                r.interior.passes.to_string(),
                fmt_f64(r.interior.rate),
                fmt_f64(r.interior.std_error),
                r.verdict.passes.to_string(),
                fmt_f64(r.verdict.rate),
                fmt_f64(r.verdict.std_error),
                fmt_f64(r.marginal_product),
                fmt_f64(r.exact_forward),
                fmt_f64(r.schedule_interior),
                fmt_f64(r.schedule_verdict),
                fmt_f64(r.guess_bound),
                fmt_f64(r.steady_state),
                r.steps.to_string(),
            ]
        }),
    )
}

/// Open-loop maneuver from `d_ref` to `checkpoint` for each λ.
pub fn maneuver_rows(
    d_ref: f64,
    checkpoint: f64,
    velocity: f64,
    params: &AccParams,
    lambdas: &[f64],
    duration: f64,
) -> Result<Vec<Vec<String>>, AccError> {
    let mut rows = Vec::new();
    for &lambda in lambdas {
        let p = AccParams { lambda, ..*params };
        for s in maneuver_profile(d_ref, checkpoint, velocity, &p, duration)? {
            rows.push(vec![
                fmt_f64(lambda),
                fmt_f64(s.time),
                fmt_f64(s.accel),
                fmt_f64(s.candidate_velocity),
                fmt_f64(checkpoint - s.delta),
            ]);
        }
    }
    Ok(rows)
}

pub fn write_maneuver(path: &Path, rows: Vec<Vec<String>>) -> Result<(), HarnessError> {
    write_table(path, MANEUVER_HEADER, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ScenarioConfig, ScenarioKind};
    use crate::harness::engine::run_scenario;
    use proptest::prelude::*;

    #[test]
    fn float_format() {
        assert_eq!(fmt_f64(0.0), "0");
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(31.800000000000004), "31.8");
        assert_eq!(fmt_f64(7.6000000000000005), "7.6");
        assert_eq!(fmt_f64(45.0), "45");
        assert_eq!(fmt_f64(-1.25), "-1.25");
        assert_eq!(fmt_f64(0.019607843137254912), "0.0196078431");
        assert_eq!(fmt_f64(1.4781526816424204e-7), "1.47815268e-7");
        assert_eq!(fmt_f64(1234567.891234), "1234567.89");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    proptest! {
        #[test]
        fn nine_significant_digits_roundtrip(v in -1e12f64..1e12) {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            let tol = v.abs() * 1e-8 + 1e-300;
            prop_assert!((back - v).abs() <= tol, "{} -> {} -> {}", v, s, back);
        }
    }

    #[test]
    fn scenario_files_have_headers_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ScenarioConfig {
            scenario: ScenarioKind::MitmKnown,
            k: 2,
            ..Default::default()
        };
        let r = run_scenario(&cfg).unwrap();
        write_scenario(dir.path(), &r, cfg.dt).unwrap();
        let result = std::fs::read_to_string(dir.path().join("result.csv")).unwrap();
        let mut lines = result.lines();
        assert_eq!(lines.next().unwrap(), RESULT_HEADER.join(","));
        let row = lines.next().unwrap();
        assert!(
            row.starts_with("mitm-known,1,2,REJECT,ABORT(unexpected-signer),"),
            "{row}"
        );
        let ch = std::fs::read_to_string(dir.path().join("challenges.csv")).unwrap();
        assert_eq!(ch.lines().count(), 1 + 4);
        let msgs = std::fs::read_to_string(dir.path().join("messages.csv")).unwrap();
        assert!(msgs.lines().nth(1).unwrap().contains(",C,V,join-request,0,"));
    }

    #[test]
    fn maneuver_rows_cover_each_lambda() {
        let rows = maneuver_rows(45.0, 42.0, 30.0, &AccParams::default(), &[0.1, 0.4], 20.0).unwrap();
        assert_eq!(rows.len(), 2 * 201);
        assert_eq!(rows[0][0], "0.1");
        assert_eq!(rows[0][4], "45");
    }
}
