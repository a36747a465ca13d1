use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn gclind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gclind")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_in(tmp: &TempDir, sub: &str, cfg: &str, extra: &[&str]) -> Output {
    let out_dir = tmp.path().to_string_lossy().into_owned();
    let mut args = vec![sub, cfg, "--out", &out_dir];
    args.extend_from_slice(extra);
    gclind(&args)
}

fn last_data_row(csv: &str) -> Vec<f64> {
    csv.lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect()
}

#[test]
fn evolve_relaxes_to_gibbs_populations() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(&tmp, "evolve", &config("two_level.json"), &["--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(tmp.path().join("two_level_trajectory.csv")).unwrap();
    let mut lines = text.lines();
    let comment = lines.next().unwrap();
    assert!(comment.starts_with("# gclind 0.1.0 config_sha256="), "{comment}");
    let hex = comment.rsplit('=').next().unwrap();
    assert_eq!(hex.len(), 64);
    assert!(hex.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(
        lines.next().unwrap(),
        "time,pop_0,pop_1,re_rho_0_1,im_rho_0_1,trace,min_eigenvalue"
    );
    let row = last_data_row(&text);
    assert!((row[0] - 20.0).abs() < 1e-12);
    assert!((row[1] - 1.0 / 3.0).abs() < 1e-8, "excited population {}", row[1]);
    assert!((row[2] - 2.0 / 3.0).abs() < 1e-8, "ground population {}", row[2]);
}

#[test]
fn config_flag_and_positional_path_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("linear_reservoir.json");
    assert!(run_in(&a, "mu-extract", &cfg, &[]).status.success());
    let dir = b.path().to_string_lossy().into_owned();
    assert!(gclind(&["mu-extract", "--config", &cfg, "--out", &dir])
        .status
        .success());
    assert_eq!(
        fs::read(a.path().join("mu.json")).unwrap(),
        fs::read(b.path().join("mu.json")).unwrap()
    );
}

#[test]
fn sigma_minus_fails_condition_a_without_failing_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(&tmp, "check", &config("cond_a.json"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("check.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "FAIL");
    assert_eq!(report["channel_defects"][0]["normality"].as_f64(), Some(1.0));
}

#[test]
fn balanced_groups_pass_condition_b() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_in(&tmp, "check", &config("cond_b.json"), &[]).status.success());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("check.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "PASS");
    assert!(report["group_norms"].is_array());
}

#[test]
fn linear_reservoir_gives_its_slope() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_in(&tmp, "mu-extract", &config("linear_reservoir.json"), &[])
        .status
        .success());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("mu.json")).unwrap()).unwrap();
    assert_eq!(report["mu"].as_f64(), Some(1.0));
}

#[test]
fn steady_state_of_explicit_model() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(&tmp, "steady", &config("steady.json"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(tmp.path().join("steady.json").exists());
}

#[test]
fn sample_is_reproducible_and_seed_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("sample.json");
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, seed) in dirs.iter().zip([None, None, Some("5")]) {
        let d = dir.to_string_lossy().into_owned();
        let mut args = vec!["sample", &cfg, "--out", &d, "--quiet"];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        let out = gclind(&args);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let chain = |d: &PathBuf| fs::read_to_string(d.join("sample_chain.csv")).unwrap();
    assert_eq!(chain(&dirs[0]), chain(&dirs[1]));
    assert!(chain(&dirs[0]).lines().next().unwrap().ends_with(" seed=42"));
    assert!(chain(&dirs[2]).lines().next().unwrap().ends_with(" seed=5"));
    assert_ne!(chain(&dirs[0]).lines().nth(2), None);
    assert_eq!(chain(&dirs[0]).lines().nth(1), Some("step,time,n,accepted,weight_n"));
    assert!(dirs[0].join("sample_estimates.csv").exists());
    assert!(dirs[0].join("sample_stats.json").exists());
}

#[test]
fn validate_accepts_shipped_configs() {
    for name in [
        "two_level.json",
        "steady.json",
        "cond_a.json",
        "cond_b.json",
        "linear_reservoir.json",
        "sample.json",
    ] {
        let out = gclind(&["validate", &config(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("OK"));
    }
}

#[test]
fn nonpositive_dt_is_one_defect() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("two_level.json"))
        .unwrap()
        .replace("\"dt\": 0.001", "\"dt\": -0.5");
    let cfg = write_config(tmp.path(), &text);
    let out = gclind(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    let defects: Vec<&str> = err.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(defects.len(), 1, "{err}");
    assert!(defects[0].contains("numerics.dt"), "{err}");
}

#[test]
fn window_defect_names_both_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("sample.json"))
        .unwrap()
        .replace("\"window_half_width\": 2", "\"window_half_width\": 9");
    let cfg = write_config(tmp.path(), &text);
    let out = gclind(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(
        err.contains("window_center") && err.contains("window_half_width"),
        "{err}"
    );
    assert!(err.contains("lower bound") && err.contains("upper bound"), "{err}");
}

#[test]
fn every_defect_is_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{
          "scenario": "steady",
          "model": {
            "hamiltonian": [[1.0, 2.0], [0.0, 1.0]],
            "channels": [{ "operator": "sigma_minus", "rate": -1.0 }]
          }
        }"#,
    );
    let out = gclind(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("model.hamiltonian"), "{err}");
    assert!(err.contains("model.channels[0].rate"), "{err}");
}

#[test]
fn unknown_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let text =
        fs::read_to_string(config("steady.json"))
            .unwrap()
            .replacen("\"model\": {", "\"model\": { \"bogus\": 1,", 1);
    let cfg = write_config(tmp.path(), &text);
    let out = gclind(&["validate", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("model.bogus"), "{}", stderr(&out));
}

#[test]
fn missing_matrix_file_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "scenario": "steady", "model": { "hamiltonian": { "file": "nowhere.txt" } } }"#,
    );
    let out = run_in(&tmp, "steady", &cfg, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.txt"), "{}", stderr(&out));
}

#[test]
fn unreadable_config_is_a_validation_error() {
    let out = gclind(&["steady", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn subcommand_must_match_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_in(&tmp, "steady", &config("cond_a.json"), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unstable_step_is_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("two_level.json"))
        .unwrap()
        .replace("\"gamma0\": 1.0", "\"gamma0\": 100.0")
        .replace("\"dt\": 0.001", "\"dt\": 0.1");
    let cfg = write_config(tmp.path(), &text);
    let out = run_in(&tmp, "evolve", &cfg, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}
