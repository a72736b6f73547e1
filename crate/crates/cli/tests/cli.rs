use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn fscbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fscbf")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_outputs_and_honors_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = repo("configs/open_field.toml");
    let out = fscbf(&["simulate", "--config", s(&config), "--out", s(dir.path()), "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("reached_goal=true"));
    assert!(dir.path().join("trace.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 42);
}

#[test]
fn infeasible_run_still_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = repo("configs/case_study_2.toml");
    let out = fscbf(&["simulate", "--config", s(&config), "--out", s(dir.path()), "--controller", "cbf_qp"]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["first_infeasible_time"].as_f64().unwrap() < 7.0);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "initial_state = [0.0]\ngoal = [1.0, 1.0]\n[model]\nkind = \"unicycle\"\n").unwrap();
    let out = fscbf(&["simulate", "--config", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "speed = 3\n").unwrap();
    let out = fscbf(&["sweep", "--spec", s(&unknown), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = fscbf(&["volcheck", "--fixtures", s(&dir.path().join("missing"))]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn sweep_reports_are_byte_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        format!(
            "scenario = {:?}\nsamples = 3\nseed = 9\nalpha_v = [1.0, 2.0]\n[ranges]\npx = [0.9, 1.1]\nk_v = [2.5, 2.6]\n",
            s(&repo("configs/case_study_2.toml"))
        ),
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = fscbf(&["sweep", "--spec", s(&spec), "--out", s(&a), "--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = Command::new(env!("CARGO_BIN_EXE_fscbf"))
        .args(["sweep", "--spec", s(&spec), "--out", s(&b)])
        .env("FSCBF_JOBS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("fs_cbf_qp@1") && stdout.contains("fs_cbf_qp@2"));
    for f in ["report.json", "runs.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn volcheck_flags_a_wrong_known_volume() {
    let out = fscbf(&["volcheck", "--fixtures", s(&repo("fixtures/polytopes"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("wrong.json"),
        r#"{"A": [[1,0],[0,1],[-1,0],[0,-1]], "b": [1,1,1,1], "tags": ["bound","bound","bound","bound"], "volume": 3.0}"#,
    )
    .unwrap();
    let out = fscbf(&["volcheck", "--fixtures", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gridsweep_writes_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("grid.toml");
    std::fs::write(
        &spec,
        "x = [0.0, 4.0]\ny = [0.0, 4.0]\ncells = [10, 8]\n\
         [[obstacles]]\ncenter = [2.0, 2.0]\nradius = 0.5\n\
         [[chains]]\nname = \"base\"\ngains = [1.0, 1.0]\n\
         [[chains]]\nname = \"doubled\"\ngains = [2.0, 2.0]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = fscbf(&["gridsweep", "--spec", s(&spec), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = std::fs::read_to_string(out_dir.join("doubled_ellipsoid_clipped.csv")).unwrap();
    assert_eq!(m.lines().count(), 8);
    assert_eq!(m.lines().next().unwrap().split(',').count(), 10);
}
