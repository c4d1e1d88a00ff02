//! Drives the built binary.

use std::path::Path;
use std::process::Command;

fn pof(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pof-sim"))
        .args(args)
        .output()
        .expect("spawn")
}

fn ok(args: &[&str]) -> String {
    let out = pof(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn run_writes_scenario_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&["run", "--out", out, "--seed", "3", "--K", "2"]);
    assert!(stdout.contains("outcome=ACCEPT"), "{stdout}");
    assert_eq!(
        header(&dir.path().join("traces.csv")),
        "tick,time,vehicle,lane,position,velocity,acceleration,gap_to_verifier"
    );
    for f in ["challenges.csv", "messages.csv", "result.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "scenario = \"mitm-known\"\nK = 1\n").unwrap();
    let out = dir.path().join("o");
    let stdout = ok(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(
        stdout.contains("mitm-known") && stdout.contains("ABORT(unexpected-signer)"),
        "{stdout}"
    );
    let stdout = ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--scenario",
        "mitm-unknown",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("admitted=M"), "{stdout}");
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&[
            "run",
            "--scenario",
            "traffic",
            "--adjust",
            "recompute",
            "--seed",
            "9",
            "--out",
            d.path().to_str().unwrap(),
        ]);
    }
    for f in ["traces.csv", "challenges.csv", "messages.csv", "result.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn sweep_security_maneuver_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["sweep", "--out", out, "--param", "K", "--grid", "1,2", "--seeds", "3"]);
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    ok(&["security", "--out", out, "--k-grid", "1", "--trials", "200"]);
    assert!(header(&dir.path().join("security.csv")).starts_with("K,N,M,trials,"));
    ok(&["maneuver", "--out", out]);
    let stdout = ok(&["plot", "--out", out]);
    for f in ["sweep.svg", "security.svg", "maneuver.svg"] {
        assert!(dir.path().join(f).exists(), "{f}: {stdout}");
    }
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(!pof(&["run", "--out", out, "--scenario", "nope"]).status.success());
    assert!(!pof(&["sweep", "--out", out, "--param", "tau"]).status.success());
    let bad = dir.path().join("sweep.csv");
    std::fs::write(&bad, "param,value\nK,1\n").unwrap();
    let o = pof(&["plot", bad.to_str().unwrap(), "--out", out]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("mean_time"));
}

#[test]
fn shipped_configs_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&["run", "--config", root.join("reference.toml").to_str().unwrap(), "--out", out]);
    assert!(stdout.contains("outcome=ACCEPT"), "{stdout}");
    let stdout = ok(&["run", "--config", root.join("traffic.toml").to_str().unwrap(), "--out", out]);
    assert!(stdout.contains("outcome=ACCEPT"), "{stdout}");
    let stdout = ok(&["run", "--config", root.join("traffic.toml").to_str().unwrap(), "--adjust", "none", "--out", out]);
    assert!(stdout.contains("outcome=REJECT"), "{stdout}");
}
