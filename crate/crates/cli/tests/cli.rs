use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ipd_core::engine::cooperation_probability;
use ipd_core::RunConfig;
use serde_json::Value;
use tempfile::TempDir;

fn ipdq(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipdq"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("IPDQ_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn trajectory_preset_reaches_pavlov() {
    let tmp = TempDir::new().unwrap();
    let out = ipdq(&["trajectory"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&tmp.path().join("summary.json"));
    assert_eq!(s["final_policy"], "pavlov");
    let (t1, t2) = (s["t1"].as_u64().unwrap(), s["t2"].as_u64().unwrap());
    assert_eq!(t1, 10);
    assert!(t1 < t2);
    let csv = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2002);
    assert!(csv.lines().next().unwrap().starts_with("t,s,a1,a2,r1,r2,q_dd_c"));
    let gaps = fs::read_to_string(tmp.path().join("gaps.csv")).unwrap();
    assert!(gaps.starts_with("t,gap_dd,gap_cc,gap_cd,gap_dc\n"));
}

#[test]
fn zero_iterations_write_initial_row_only() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "t.json", r#"{"config": {"n_iter": 0}}"#);
    let out = ipdq(&["trajectory", "--config", &spec], &tmp.path().join("o"));
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("o/trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,DD,,,,,"), "{}", lines[1]);
}

#[test]
fn batch_trajectory_writes_gap_statistics() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "t.json",
        r#"{"config": {"epsilon": 0.05, "n_iter": 300}, "batch_runs": 20}"#,
    );
    let out = ipdq(&["trajectory", "--config", &spec], tmp.path());
    assert!(out.status.success());
    let stats = fs::read_to_string(tmp.path().join("gap_stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 302);
    let batch = json(&tmp.path().join("batch_summary.json"));
    assert_eq!(batch["n_runs"], 20);
}

#[test]
fn kind_mismatch_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "s.json", r#"{"kind": "sweep"}"#);
    let out = ipdq(&["trajectory", "--config", &spec], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn invalid_payoff_is_rejected_before_checks() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "v.json",
        r#"{"payoff": {"r_cc": 4.0, "r_cd": 0.0, "r_dc": 3.0, "r_dd": 1.0}}"#,
    );
    let out = ipdq(&["verify", "--config", &spec], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("r_dc > r_cc"));
    assert!(!tmp.path().join("verify.json").exists());
}

#[test]
fn small_discount_verify_reports_facts_and_exits_zero() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "v.json",
        r#"{"gamma": 0.1, "n_runs": 10, "n_iter": 300, "event_max_horizon": 8}"#,
    );
    let out = ipdq(&["verify", "--config", &spec], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&tmp.path().join("verify.json"));
    assert_eq!(r["facts"]["pavlov_exists"], false);
    assert_eq!(r["facts"]["pavlov_is_spe"], false);
    assert_eq!(r["passed"], true);
    assert!((r["facts"]["pavlov_gamma_threshold"].as_f64().unwrap() - 0.125).abs() < 1e-12);
}

#[test]
fn output_directory_defaults_to_environment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("env-out");
    let out = Command::new(env!("CARGO_BIN_EXE_ipdq"))
        .arg("fixedpoint")
        .env("IPDQ_OUT_DIR", &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("fixedpoint.csv").exists());
    assert!(dir.join("spec.json").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("fixedpoint.json"));
}

#[test]
fn fixedpoint_table_lists_consistent_profiles() {
    let tmp = TempDir::new().unwrap();
    assert!(ipdq(&["fixedpoint"], tmp.path()).status.success());
    let csv = fs::read_to_string(tmp.path().join("fixedpoint.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 16);
    let consistent: Vec<&str> = csv
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("0.0000000000000000e0,") && l.split(',').nth(3) == Some("true"))
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(consistent, ["always_defect", "grim_trigger", "pavlov"]);
}

#[test]
fn single_cell_sweep_matches_cooperation_probability() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "s.json",
        r#"{"grid": {"alphas": [0.1], "epsilons": [0.05], "n_runs": 40, "n_iter": 500, "base": {"seed": 9}},
            "g_sweep": null}"#,
    );
    let out = ipdq(&["sweep", "--config", &spec, "--jobs", "2"], tmp.path());
    assert!(out.status.success());
    let rows = json(&tmp.path().join("sweep.json"));
    let cfg = RunConfig {
        alpha: 0.1,
        epsilon: 0.05,
        n_iter: 500,
        seed: 9,
        ..RunConfig::default()
    };
    let est = cooperation_probability(&cfg, 40, Some(1)).unwrap();
    assert_eq!(rows[0]["coop_prob"].as_f64().unwrap(), est.estimate);
    assert!(!tmp.path().join("g_sweep.csv").exists());
}

#[test]
fn rate_command_matches_prediction() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "r.json", r#"{"alphas": [0.2, 0.1, 0.05]}"#);
    let out = ipdq(&["rate", "--config", &spec], tmp.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("rate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(2).unwrap().contains(",10,"));
}

#[test]
fn short_dqn_run_writes_per_seed_logs() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "d.json",
        r#"{"config": {"num_iters": 50, "pretrain_iters": 20, "batch_size": 16, "hidden": 8}, "n_seeds": 2}"#,
    );
    let out = ipdq(&["dqn", "--config", &spec, "--seed", "3"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in [3, 4] {
        let log = fs::read_to_string(tmp.path().join(format!("dqn_seed_{seed}.csv"))).unwrap();
        assert_eq!(log.lines().count(), 71);
        assert!(log.starts_with("iter,epsilon,p_c_cc,p_c_dd,p_c_cd,p_c_dc,loss\n"));
    }
    let summary = json(&tmp.path().join("dqn.json"));
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 2);
    assert_eq!(summary["config"]["seed"], 3);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(
        tmp.path(),
        "t.json",
        r#"{"config": {"epsilon": 0.1, "n_iter": 500, "seed": 5}, "batch_runs": 10}"#,
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(ipdq(&["trajectory", "--config", &spec], &a).status.success());
    assert!(ipdq(&["trajectory", "--config", &spec, "--jobs", "1"], &b).status.success());
    for name in ["spec.json", "trajectory.csv", "gaps.csv", "summary.json", "gap_stats.csv", "batch_summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}
