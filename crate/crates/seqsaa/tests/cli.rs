//! Command-line behavior: exit codes, file round trips, report schema.

use std::path::Path;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_seqsaa")
}

#[test]
fn generate_round_trips_and_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(
        &spec_path,
        serde_json::json!({
            "n1": 10, "r1": 4, "n2": 12, "r2": 6, "support": 27, "seed": 5
        })
        .to_string(),
    )
    .unwrap();
    let out1 = dir.path().join("a.json");
    let out2 = dir.path().join("b.json");
    for out in [&out1, &out2] {
        let status = Command::new(bin())
            .args(["generate", "--spec"])
            .arg(&spec_path)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "same seed must give identical file bytes");

    // The written instance loads back through the model loader.
    let text = std::fs::read_to_string(&out1).unwrap();
    let dto: seqsaa::model::InstanceJson = serde_json::from_str(&text).unwrap();
    let inst = dto.into_instance().unwrap();
    assert_eq!((inst.n1, inst.r1, inst.n2, inst.r2), (10, 4, 12, 6));
}

#[test]
fn malformed_spec_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("bad.json");
    std::fs::write(&spec_path, "{ not json").unwrap();
    let output = Command::new(bin())
        .args(["generate", "--spec"])
        .arg(&spec_path)
        .arg("--out")
        .arg(dir.path().join("x.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    // Parse errors carry position information.
    assert!(stderr.contains("line") && stderr.contains("column"), "stderr: {stderr}");
}

#[test]
fn missing_instance_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "instance": {"path": "/nonexistent/instance.json"},
            "schedule": {"geometric": {"c1": 1.5}},
            "m1": 20, "n1": 10
        })
        .to_string(),
    )
    .unwrap();
    let output = Command::new(bin())
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(!output.stderr.is_empty());
}

#[test]
fn unknown_config_keys_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "instance": {"name": "lands"},
            "schedule": {"geometric": {"c1": 1.5}},
            "m1": 20, "n1": 10,
            "no_such_option": true
        })
        .to_string(),
    )
    .unwrap();
    let output = Command::new(bin())
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

/// Golden schema of the solve report: field names pinned.
#[test]
fn solve_report_schema_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "instance": {"name": "lands"},
            "schedule": {"linear": {"delta": 20}},
            "m1": 20, "n1": 10, "seed": 17, "eps": 1e9
        })
        .to_string(),
    )
    .unwrap();
    let output = Command::new(bin())
        .args(["solve", "--config"])
        .arg(&cfg)
        .args(["--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let mut keys: Vec<&str> =
        report.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        vec![
            "ci_upper",
            "elapsed_s",
            "eps",
            "g_tilde",
            "instance",
            "l_final",
            "m_final",
            "n_final",
            "objective_estimate",
            "records",
            "s_tilde",
            "timed_out",
            "total_inner",
            "validate_lp_solves",
            "work_lp_solves",
            "x_hat",
        ]
        .into_iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .iter()
        .map(|s| s.as_str())
        .collect::<Vec<_>>()
    );
    // eps = 1e9 stops after the first validation.
    assert_eq!(report["l_final"], 1);

    // The resolved config echo is written beside the outputs and loads
    // back as a valid config.
    let echo = std::fs::read_to_string(dir.path().join("config.resolved.json")).unwrap();
    let cfg_back: seqsaa::sequential::RunConfig = serde_json::from_str(&echo).unwrap();
    cfg_back.validate().unwrap();

    let trajectory = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(trajectory.starts_with("run_id,l,m_l,n_l,inner_iters,lp_count,G,eps_l,ci_upper,true_gap\n"));
}

#[test]
fn study_schedule_sweep_gives_one_row_per_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "base": {
                "instance": {"name": "lands"},
                "schedule": {"geometric": {"c1": 1.5}},
                "m1": 20, "n1": 10, "seed": 5, "eps_rel": 5e-3,
                "time_limit_s": 600.0
            },
            "replications": 2,
            "schedules": [
                {"linear": {"delta": 100}},
                {"geometric": {"c1": 1.5}},
                {"dynamic": {"c0": 1.05, "ch": 3.0, "c1_init": 1.5}}
            ]
        })
        .to_string(),
    )
    .unwrap();
    let output = Command::new(bin())
        .args(["study", "--config"])
        .arg(&cfg)
        .args(["--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.trim().lines().collect();
    assert_eq!(lines.len(), 4, "header + 3 schedule rows: {summary}");
    assert!(lines[1].starts_with("linear(100),"));
    assert!(lines[2].starts_with("geometric(1.5),"));
    assert!(lines[3].starts_with("dynamic(1.05,3,1.5),"));
    assert!(Path::new(&dir.path().join("replications.csv")).exists());
}

#[test]
fn lemma_check_succeeds() {
    let output = Command::new(bin()).args(["lemma-check", "--k-max", "20"]).output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("Abs: pass"));
    assert!(stdout.contains("Square: pass"));
    assert!(stdout.contains("PiecewiseFlat: pass"));
}
