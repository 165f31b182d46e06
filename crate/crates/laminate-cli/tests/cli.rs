//! End-to-end tests of the `laminate` binary: report contents, output
//! determinism, and the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_laminate"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn monopoly_exponential(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "monopoly.json",
        r#"{
            "schema": 1,
            "market": {"kind": "exponential", "lambda": 2.0},
            "flow": {"kind": "iid", "dist": {"kind": "point_mass", "r": 0.1}, "K": 1},
            "allocation": {"kind": "monopoly", "player": 1},
            "x0": {"kind": "point_mass", "x0": 1.0},
            "x_oracle": 1.0,
            "action_space": [0.2, 3.0],
            "replicas": 500,
            "seed": 7
        }"#,
    )
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn solve_reports_the_monopoly_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let config = monopoly_exponential(tmp.path());
    let out = bin().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report = stdout_json(&out);
    let player = &report["players"][0];
    let phi_exact = 1.0 / (2.0 - (-0.2f64).exp());
    let s_exact = 1.0 - phi_exact.ln() / 2.0;
    assert!((player["s_star"].as_f64().unwrap() - s_exact).abs() < 1e-9);
    assert!((player["phi_bar"].as_f64().unwrap() - phi_exact).abs() < 1e-9);
    // the closed form is exact on this market
    let zeta = player["zeta"]["zeta"].as_f64().unwrap();
    assert!((zeta - player["phi_bar"].as_f64().unwrap()).abs() < 1e-10);
    assert_eq!(report["non_participants"].as_array().unwrap().len(), 0);
}

#[test]
fn solve_writes_the_report_to_the_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let config = monopoly_exponential(tmp.path());
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["solve", "--quiet", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "--quiet must silence stdout");
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("solution.json")).unwrap()).unwrap();
    assert_eq!(report["players"][0]["player"], 1);
}

#[test]
fn simulate_is_byte_identical_under_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "bernoulli.json",
        r#"{
            "schema": 1,
            "market": {"kind": "cpmm", "alpha": 1.0, "beta": 1.0},
            "flow": {"kind": "iid",
                     "dist": {"kind": "two_point", "r_plus": 0.1, "r_minus": -0.1, "p_plus": 0.5},
                     "K": 2},
            "allocation": {"kind": "bernoulli", "weights": [0.6, 0.4]},
            "x0": {"kind": "point_mass", "x0": 1.0},
            "x_oracle": 1.0,
            "action_space": [0.3, 3.0],
            "replicas": 128,
            "seed": 11
        }"#,
    );
    let run = |out_dir: &Path, seed: &str| {
        let out = bin()
            .args(["simulate", "--quiet", "--seed", seed, "--config"])
            .arg(&config)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        (
            fs::read(out_dir.join("traces.jsonl")).unwrap(),
            fs::read(out_dir.join("summary.csv")).unwrap(),
        )
    };
    let (t1, s1) = run(&tmp.path().join("a"), "11");
    let (t2, s2) = run(&tmp.path().join("b"), "11");
    assert_eq!(t1, t2, "traces must be byte-identical under the same seed");
    assert_eq!(s1, s2, "summaries must be byte-identical under the same seed");

    let (t3, _) = run(&tmp.path().join("c"), "12");
    assert_ne!(t1, t3, "a different seed must change the draws");

    // one trace line per replica, one summary row per replica and player
    assert_eq!(t1.iter().filter(|&&b| b == b'\n').count(), 128);
    let summary = String::from_utf8(s1).unwrap();
    assert_eq!(summary.lines().count(), 1 + 128 * 2);
    assert!(summary.starts_with("replica,player,utility"));
}

#[test]
fn sweep_emits_one_row_per_point_and_player() {
    let tmp = tempfile::tempdir().unwrap();
    let config = monopoly_exponential(tmp.path());
    let out = bin()
        .args([
            "sweep",
            "--quiet",
            "--axis",
            "flow_scale",
            "--values",
            "1,0.1,0.01",
            "--config",
        ])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4, "header plus three rows:\n{csv}");
    assert!(lines[0].starts_with("grid_index,axis,value,player,s_star"));
    // |log coefficient| must shrink as the flow scales down
    let coeff = |line: &str| -> f64 { line.split(',').nth(6).unwrap().parse().unwrap() };
    let c: Vec<f64> = lines[1..].iter().map(|l| coeff(l)).collect();
    assert!(c[0].abs() > c[1].abs() && c[1].abs() > c[2].abs());
}

#[test]
fn verify_passes_on_a_sound_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = monopoly_exponential(tmp.path());
    let out = bin().args(["verify", "--config"]).arg(&config).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["pass"], true);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "bad.json", r#"{"schema": 1, "bogus": true}"#);
    let out = bin().args(["solve", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["code"], "invalid");

    // missing file is an I/O failure, same exit class
    let out = bin().args(["solve", "--config"]).arg(tmp.path().join("absent.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["code"], "io");
}

#[test]
fn diverging_closed_form_exits_3_with_a_pole_report() {
    let tmp = tempfile::tempdir().unwrap();
    // sell flow so large the damping factor exceeds the pole threshold
    let config = write_config(
        tmp.path(),
        "pole.json",
        r#"{
            "schema": 1,
            "market": {"kind": "exponential", "lambda": 2.0},
            "flow": {"kind": "iid", "dist": {"kind": "point_mass", "r": -1.2}, "K": 1},
            "allocation": {"kind": "monopoly", "player": 1},
            "x0": {"kind": "point_mass", "x0": 1.0},
            "x_oracle": 1.0,
            "action_space": [0.2, 3.0]
        }"#,
    );
    let out = bin().args(["verify", "--quiet", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = stderr_json(&out);
    assert_eq!(err["code"], "pole");
    assert!(err["context"]["product"].as_f64().unwrap() >= 1.0);
}

#[test]
fn tampered_tolerance_fails_verification_with_exit_5() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "tampered.json",
        r#"{
            "schema": 1,
            "market": {"kind": "exponential", "lambda": 2.0},
            "flow": {"kind": "iid", "dist": {"kind": "point_mass", "r": 0.1}, "K": 1},
            "allocation": {"kind": "monopoly", "player": 1},
            "x0": {"kind": "point_mass", "x0": 1.0},
            "x_oracle": 1.0,
            "action_space": [0.2, 3.0],
            "solver": {"depth_tol_rel": 0.5, "residual_tol": 1.0, "max_iter": 200},
            "replicas": 500,
            "seed": 7
        }"#,
    );
    let out = bin().args(["verify", "--quiet", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(5), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = stderr_json(&out);
    assert_eq!(err["code"], "verify");
    let failed: Vec<&str> =
        err["context"]["failed"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(failed.contains(&"solver_vs_oracle"), "failed: {failed:?}");
}

#[test]
fn simulate_summary_mean_matches_the_exact_expectation() {
    // deterministic single-order game: every replica repeats the same batch,
    // so the summary mean must equal the enumerated expected utility
    let tmp = tempfile::tempdir().unwrap();
    let config = monopoly_exponential(tmp.path());
    let out = bin()
        .args(["simulate", "--replicas", "64", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    let mean = report["estimates"][0]["mean"].as_f64().unwrap();

    // exact: the monopolist nets C(s*+r) - 2 C(s*) per batch on this market
    let phi = 1.0 / (2.0 - (-0.2f64).exp());
    let s = 1.0 - phi.ln() / 2.0;
    let cost = |x: f64| (x - 1.0) + ((-2.0 * (x - 1.0f64)).exp() - 1.0) / 2.0;
    let exact = cost(s + 0.1) - 2.0 * cost(s);
    assert!(
        (mean - exact).abs() < 1e-12,
        "mean {mean} vs exact {exact}"
    );
}
