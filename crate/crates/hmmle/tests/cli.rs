//! End-to-end tests of the `hmmle` binary: exit codes, artifact layout,
//! and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

const MODEL: &str = "family = two_state\ntheta_min = 0.1\ntheta_max = 5\nnu = 0.5, 0.5\n";

fn hmmle(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmle"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.txt"), MODEL).unwrap();
    std::fs::write(dir.path().join("exp.cfg"), config).unwrap();
    dir
}

#[test]
fn version_prints_semver() {
    let dir = tempfile::tempdir().unwrap();
    let out = hmmle(&["--version"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let version = text.trim().rsplit(' ').next().unwrap();
    assert_eq!(version.split('.').count(), 3, "not a semver: {version}");
}

#[test]
fn unknown_command_exits_1_with_message() {
    let dir = setup("model.file = model.txt\nrun.master_seed = 1\n");
    let out = hmmle(&["frobnicate", "--config", "exp.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("unknown command"), "{err}");
    assert!(err.contains("frobnicate"), "{err}");
}

#[test]
fn malformed_config_exits_1_with_message() {
    let dir = setup("model.file model.txt\n");
    let out = hmmle(&["estimate", "--config", "exp.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("key = value"), "{err}");
}

#[test]
fn missing_model_file_exits_1_naming_the_path() {
    let dir = setup("model.file = nowhere.txt\nrun.master_seed = 1\n");
    let out = hmmle(&["estimate", "--config", "exp.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("model file not found"), "{err}");
    assert!(err.contains("nowhere.txt"), "{err}");
}

#[test]
fn estimate_is_deterministic_and_writes_manifest() {
    let dir = setup(
        "model.file = model.txt\nrun.master_seed = 42\nrun.t = 20\nrun.dt = 1e-2\n",
    );
    let run = |out_dir: &str| {
        let out = hmmle(&["estimate", "--config", "exp.cfg", "--out", out_dir], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(dir.path().join(out_dir).join("report.json")).unwrap()
    };
    let a = run("out_a");
    let b = run("out_b");
    assert_eq!(a, b);
    assert!(a.contains("theta_hat"));

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out_a/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "estimate");
    assert_eq!(manifest["master_seed"], 42);
    let outputs: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(outputs, vec!["grid.csv", "manifest.json", "report.json"]);
    // Everything listed in the manifest exists on disk.
    for name in outputs {
        assert!(dir.path().join("out_a").join(name).is_file(), "{name}");
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = setup(
        "model.file = model.txt\nrun.master_seed = 42\nrun.t = 10\nrun.dt = 1e-2\n",
    );
    let run = |args: &[&str], out_dir: &str| {
        let mut full = vec!["estimate", "--config", "exp.cfg", "--out", out_dir];
        full.extend_from_slice(args);
        let out = hmmle(&full, dir.path());
        assert!(out.status.success());
        std::fs::read_to_string(dir.path().join(out_dir).join("report.json")).unwrap()
    };
    let base = run(&[], "out_a");
    let reseeded = run(&["--seed", "7"], "out_b");
    assert_ne!(base, reseeded);
}

#[test]
fn simulate_writes_chain_and_obs() {
    let dir = setup(
        "model.file = model.txt\nrun.master_seed = 3\nrun.t = 5\nrun.dt = 1e-2\n",
    );
    let out = hmmle(&["simulate", "--config", "exp.cfg", "--out", "out"], dir.path());
    assert!(out.status.success());
    let chain = std::fs::read_to_string(dir.path().join("out/chain.csv")).unwrap();
    assert!(chain.starts_with("jump_time,state\n0,"));
    let obs = std::fs::read_to_string(dir.path().join("out/obs.csv")).unwrap();
    assert!(obs.starts_with("k,dx\n0,"));
    assert_eq!(obs.lines().count(), 501);
}

#[test]
fn filter_csv_has_header_and_rows() {
    let dir = setup(
        "model.file = model.txt\nrun.master_seed = 3\nrun.t = 2\nrun.dt = 1e-2\n",
    );
    let out = hmmle(&["filter", "--config", "exp.cfg", "--out", "out"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("out/filter.csv")).unwrap();
    assert!(csv.starts_with("k,t,pi_0,pi_1,loglik_partial,dpi_0,dpi_1\n"));
    assert_eq!(csv.lines().count(), 202);
}

#[test]
fn profile_and_fisher_commands_report() {
    let dir = setup(
        "model.file = model.txt\nrun.master_seed = 9\nrun.t = 20\nrun.dt = 1e-2\n\
         run.u_min = -2\nrun.u_max = 2\nrun.u_points = 11\n",
    );
    let out = hmmle(&["profile", "--config", "exp.cfg", "--out", "pout"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("pout/profile.csv")).unwrap();
    assert!(csv.starts_with("u,logZ\n"));
    assert_eq!(csv.lines().count(), 12);

    let out = hmmle(&["fisher", "--config", "exp.cfg", "--out", "fout"], dir.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("fout/report.json")).unwrap(),
    )
    .unwrap();
    assert!(report["fisher"].as_f64().unwrap() >= 0.0);
}

#[test]
fn study_report_has_m_records() {
    let dir = setup(
        "model.file = model.txt\nrun.master_seed = 13\nrun.t_list = 5\nrun.m = 50\n\
         run.dt = 1e-2\n",
    );
    let out = hmmle(
        &["study-consistency", "--config", "exp.cfg", "--out", "out"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(dir.path().join("out/records.csv")).unwrap();
    assert_eq!(records.lines().count(), 51, "header plus one row per replication");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 50);
    assert!(!report["verdicts"].as_array().unwrap().is_empty());
}

#[test]
fn identifiability_command_writes_curve() {
    let dir = setup(
        "model.file = model.txt\nrun.master_seed = 17\nrun.dt = 1e-2\n\
         run.theta_grid = 1.5, 2\n",
    );
    let out = hmmle(
        &["identifiability", "--config", "exp.cfg", "--out", "out"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/identifiability.csv")).unwrap();
    assert!(csv.starts_with("theta,g_hat\n"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn stability_suite_writes_all_artifacts() {
    let dir = setup(
        "model.file = model.txt\nrun.master_seed = 19\nrun.t = 6\nrun.dt = 1e-2\n\
         run.m = 4\nrun.n_samples = 1000\nrun.theta_list = 1.1, 1.2\nrun.p_list = 1, 2\n",
    );
    let out = hmmle(
        &["stability-suite", "--config", "exp.cfg", "--out", "out"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["contraction.csv", "tangent.csv", "taus.csv", "report.json"] {
        assert!(dir.path().join("out").join(name).is_file(), "{name}");
    }
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["coupling"]["rate"], 2.0);
    assert!(report["contraction"]["pathwise"].as_bool().unwrap());
}
