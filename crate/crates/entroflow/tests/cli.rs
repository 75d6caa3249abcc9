//! End-to-end tests of the command-line interface: exit codes, file
//! formats, environment overrides and the negative control.

use std::path::{Path, PathBuf};
use std::process::Command;

use entroflow::graphs::GraphKind;
use entroflow::presets;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_entroflow")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "entroflow-test-{}-{}",
        std::process::id(),
        tag
    ));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_stationary_writes_outputs_and_exits_zero() {
    let dir = temp_dir("run-stationary");
    let config = write_config(
        &dir,
        "stationary.conf",
        &presets::stationary(GraphKind::Regular).to_config_text(),
    );
    let out = dir.join("out");
    let status = Command::new(binary())
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .env_remove("ENTROFLOW_OUT")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");

    let trajectory = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = trajectory.lines();
    assert_eq!(lines.next().unwrap(), "t,node_index,theta,phi,mu,u");
    // constant columns: every theta equals the first
    let mut theta_first: Option<String> = None;
    for line in lines {
        let theta = line.split(',').nth(2).unwrap().to_string();
        match &theta_first {
            None => theta_first = Some(theta),
            Some(first) => assert_eq!(&theta, first, "theta drifted in a stationary run"),
        }
    }

    let diagnostics = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert_eq!(
        diagnostics.lines().next().unwrap(),
        "t,conserved_total,energy,min_theta,fp_iters,max_ratio,slack_a15,slack_a2,slack_a13"
    );
    assert_eq!(diagnostics.lines().count(), 1 + 50 + 1); // header + t=0 row + 50 steps

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "ok");
    assert!(summary["failure"].is_null());
    assert!(summary["bounds"]["phi_linf_v_sq"].is_number());
}

#[test]
fn run_missing_config_exits_one() {
    let status = Command::new(binary())
        .args(["run", "--config", "/nonexistent/nowhere.conf"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn run_rejects_step_above_guard_naming_the_entry() {
    let dir = temp_dir("run-guard");
    let mut config = presets::stationary(GraphKind::Regular);
    config.n_steps = 1; // h = t_final, far above the guard
    let path = write_config(&dir, "bad.conf", &config.to_config_text());
    let out = Command::new(binary())
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("binding guard entry") && stderr.contains("lambda_eps"),
        "stderr does not name the violated guard entry: {stderr}"
    );
}

#[test]
fn run_rejects_malformed_config() {
    let dir = temp_dir("run-malformed");
    let path = write_config(&dir, "broken.conf", "mesh.n_cells 64\n");
    let out = Command::new(binary())
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_env_overrides_flag() {
    let dir = temp_dir("run-env");
    let config = write_config(
        &dir,
        "stationary.conf",
        &presets::stationary(GraphKind::Indicator).to_config_text(),
    );
    let flag_dir = dir.join("by-flag");
    let env_dir = dir.join("by-env");
    let status = Command::new(binary())
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&flag_dir)
        .env("ENTROFLOW_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(env_dir.join("trajectory.csv").exists());
    assert!(!flag_dir.join("trajectory.csv").exists());
}

#[test]
fn sweep_stationary_has_zero_differences() {
    let dir = temp_dir("sweep-stationary");
    let config = write_config(
        &dir,
        "stationary.conf",
        &presets::stationary(GraphKind::Logarithmic).to_config_text(),
    );
    let out = dir.join("out");
    let status = Command::new(binary())
        .args(["sweep", "--param", "h", "--levels", "3", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .env_remove("ENTROFLOW_OUT")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = sweep.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with(
        "level,param,value,h,n_steps,status,diff_l2_theta,diff_l2_phi,diff_l2_mu,diff_l2_state,diff_cvstar_phi"
    ));
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[5], "ok");
        if !fields[9].is_empty() {
            let diff: f64 = fields[9].parse().unwrap();
            assert!(diff <= 1e-9, "stationary sweep difference {diff}");
        }
    }
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let dir = temp_dir("sweep-badparam");
    let config = write_config(
        &dir,
        "stationary.conf",
        &presets::stationary(GraphKind::Regular).to_config_text(),
    );
    let out = Command::new(binary())
        .args(["sweep", "--param", "gamma", "--levels", "3", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_rejects_single_level() {
    let dir = temp_dir("sweep-levels");
    let config = write_config(
        &dir,
        "stationary.conf",
        &presets::stationary(GraphKind::Regular).to_config_text(),
    );
    let out = Command::new(binary())
        .args(["sweep", "--param", "h", "--levels", "1", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_passes_on_fresh_checkout() {
    let out = Command::new(binary())
        .arg("check")
        .env_remove("ENTROFLOW_CORRUPT_TOLERANCE")
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "stdout:\n{stdout}");
    assert!(stdout.contains("all clauses passed"));
}

#[test]
fn check_corrupted_tolerances_exit_three() {
    let out = Command::new(binary())
        .arg("check")
        .env("ENTROFLOW_CORRUPT_TOLERANCE", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let all = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(all.contains("VIOLATION"), "negative control did not name a clause");
}

#[test]
fn oracle_fixed_seed_reports_are_identical() {
    let run = || {
        Command::new(binary())
            .args(["oracle", "--seed", "7", "--cases", "3"])
            .output()
            .unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn shipped_configs_parse_and_run() {
    let configs = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("conf") {
            continue;
        }
        seen += 1;
        entroflow::config::RunConfig::from_file(&path)
            .unwrap_or_else(|e| panic!("{} does not parse: {e}", path.display()));
    }
    assert_eq!(seen, 15, "expected 15 shipped configs");

    // one full run through the binary from a shipped config
    let dir = temp_dir("shipped");
    let status = Command::new(binary())
        .args(["run", "--config"])
        .arg(configs.join("smooth_indicator.conf"))
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("ENTROFLOW_OUT")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
}

#[test]
fn config_output_dir_used_without_flag_or_env() {
    let dir = temp_dir("run-configdir");
    let mut config = presets::stationary(GraphKind::Regular);
    let target = dir.join("from-config");
    config.out_dir = Some(target.to_string_lossy().into_owned());
    let path = write_config(&dir, "withdir.conf", &config.to_config_text());
    let status = Command::new(binary())
        .args(["run", "--config"])
        .arg(&path)
        .env_remove("ENTROFLOW_OUT")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(target.join("summary.json").exists());
}
