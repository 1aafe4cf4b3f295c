//! End-to-end tests against the compiled binary: exit codes, file layout,
//! CSV schema and stability, JSON report shape.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gossipgrad"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const SMOKE: &str = r#"
[topology]
kind = "ring"
n = 5
weights = "uniform"

[problem]
d = 4
zeta2 = 25.0
sigma2 = 1.0
seed = 7

[algorithm]
variant = "momentum_tracking"
eta = 1e-3
beta = 0.9

[run]
rounds = 12
seed = 42
"#;

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn run_writes_csv_and_summary_with_exit_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let out_dir = tmp.path().join("artifacts");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,f_xbar,grad_norm_sq,consensus_xi,c_sum_norm,u_bar_norm,vectors_tx"
    );
    // 12 rounds at cadence 1: rows 0..=12.
    assert_eq!(lines.count(), 13);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["status"], "completed");
    assert_eq!(summary["config"]["run"]["seed"], 42);
    assert_eq!(summary["rounds_recorded"], 13);
    assert!(summary["spectral_gap"].as_f64().unwrap() > 0.0);
    assert!(summary["distance_to_minimizer"].as_f64().unwrap() > 0.0);

    // The summary's final row and the CSV's last line describe the same state.
    let last = csv.lines().last().unwrap();
    let f_xbar: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(
        f_xbar.to_bits(),
        summary["final_metrics"]["f_xbar"].as_f64().unwrap().to_bits()
    );
}

#[test]
fn reruns_produce_byte_identical_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    for sub in ["a", "b"] {
        let out = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path().join(sub))
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let a = std::fs::read(tmp.path().join("a/metrics.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b/metrics.csv")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(tmp.path().join("a/summary.json")).unwrap();
    let b = std::fs::read(tmp.path().join("b/summary.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_and_cadence_overrides_are_echoed() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let out_dir = tmp.path().join("o");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "99", "--cadence", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["run"]["seed"], 99);
    assert_eq!(summary["config"]["run"]["cadence"], 5);
    // Rounds 0, 5, 10, 12.
    assert_eq!(summary["rounds_recorded"], 4);
}

#[test]
fn gradient_tracking_beta_is_pinned_in_the_echo() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &SMOKE.replace("momentum_tracking", "gradient_tracking"),
    );
    let out_dir = tmp.path().join("o");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["algorithm"]["beta"], 0.0);
}

#[test]
fn malformed_beta_exits_one_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &SMOKE.replace("beta = 0.9", "beta = 1.2"));
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("beta must be in [0, 1)"), "stderr: {err}");
}

#[test]
fn divergent_run_exits_two_and_reports_the_round() {
    let tmp = TempDir::new().unwrap();
    // A step size this large multiplies the state by ~5e12 every round;
    // the iterates overflow well before the 60-round horizon.
    let cfg = write_config(
        tmp.path(),
        &SMOKE
            .replace("eta = 1e-3", "eta = 1e9")
            .replace("rounds = 12", "rounds = 60"),
    );
    let out_dir = tmp.path().join("o");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    let status = summary["status"].as_str().unwrap();
    assert!(status.starts_with("diverged@"), "status: {status}");
}

#[test]
fn sweep_lays_out_run_directories_and_reports_independence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &SMOKE.replace("rounds = 12", "rounds = 40"));
    let out_dir = tmp.path().join("sweep");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "zeta2", "--values", "0,25,50", "--repeats", "3"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("sweep_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["axis"], "zeta2");
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 9);
    for entry in runs {
        let dir = out_dir.join(entry["dir"].as_str().unwrap());
        assert!(dir.join("metrics.csv").is_file(), "{dir:?}");
        assert!(dir.join("summary.json").is_file(), "{dir:?}");
        assert_eq!(entry["status"], "completed");
    }
    // Nine distinct derived seeds.
    let mut seeds: Vec<u64> = runs
        .iter()
        .map(|e| e["seed"].as_u64().unwrap())
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 9);

    let independence = &report["independence"];
    assert!(independence.is_object(), "verdict missing: {report}");
    assert_eq!(independence["levels"].as_array().unwrap().len(), 3);
    assert!(stdout(&out).contains("independence verdict"));
}

#[test]
fn sweep_on_another_axis_omits_the_verdict() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let out_dir = tmp.path().join("sweep");
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "beta", "--values", "0.0,0.9", "--repeats", "1"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("sweep_report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["independence"].is_null());
    assert_eq!(report["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_axis_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let out = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--axis", "gamma", "--values", "1,2"])
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("gamma"));
}

#[test]
fn verify_passes_on_a_healthy_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .args(["--rounds", "60"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    for check in [
        "double_stochasticity",
        "spectral_gap",
        "gossip_contraction",
        "corrector_sum",
        "mean_iterate_recursion",
        "tracking_alias_bitwise",
    ] {
        assert!(text.contains(&format!("[PASS] {check}")), "missing {check}:\n{text}");
    }
}

#[test]
fn tampered_mixing_matrix_exits_three_naming_double_stochasticity() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .args(["--rounds", "30", "--tamper-mixing", "0.01"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stdout(&out).contains("[FAIL] double_stochasticity"));
    assert!(stderr(&out).contains("double_stochasticity"));
}

#[test]
fn bound_evaluates_the_closed_form_case() {
    let out = bin()
        .args([
            "bound", "--r0", "1", "--sigma2", "0", "--smoothness", "1", "--gap", "1",
            "--beta", "0", "--nodes", "1", "--rounds", "100",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["bound"]["term1"], 0.0);
    assert_eq!(report["bound"]["term2"], 0.0);
    assert_eq!(report["bound"]["term3"], 0.01);
    assert_eq!(report["bound"]["total"], 0.01);
}

#[test]
fn bound_from_config_derives_smoothness_and_gap() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMOKE);
    let run_bound = |rounds: &str| -> serde_json::Value {
        let out = bin()
            .args(["bound", "--config"])
            .arg(&cfg)
            .args(["--rounds", rounds])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        serde_json::from_str(&stdout(&out)).unwrap()
    };
    let r1 = run_bound("1000");
    // Smoothness of the synthetic family equals the node count (up to
    // rounding in (n/sqrt(n))^2 when n is not a perfect square).
    let smoothness = r1["inputs"]["smoothness"].as_f64().unwrap();
    assert!((smoothness - 5.0).abs() < 1e-12);
    let gap = r1["inputs"]["gap"].as_f64().unwrap();
    assert!(gap > 0.0 && gap <= 1.0);

    // Doubling R exactly halves the deterministic term.
    let r2 = run_bound("2000");
    let t3a = r1["bound"]["term3"].as_f64().unwrap();
    let t3b = r2["bound"]["term3"].as_f64().unwrap();
    assert!((t3a / t3b - 2.0).abs() < 1e-12);
}

#[test]
fn bound_without_config_requires_all_parameters() {
    let out = bin()
        .args(["bound", "--r0", "1", "--sigma2", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("required"));
}

#[test]
fn missing_config_file_exits_one() {
    let out = bin()
        .args(["run", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
