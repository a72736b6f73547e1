use fscbf::experiments::{gridsweep, simulate, sweep, volcheck, GridSweepSpec, SweepSpec};
use fscbf::scenario::{load_config, ControllerKind, ScenarioConfig};
use std::path::PathBuf;

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn case_study() -> ScenarioConfig {
    load_config(&repo("configs/case_study_2.toml")).unwrap()
}

fn small_spec(samples: usize) -> SweepSpec {
    let mut spec: SweepSpec = load_config(&repo("configs/sweep_scene2.toml")).unwrap();
    spec.samples = samples;
    spec.alpha_v = vec![1.0];
    spec
}

#[test]
fn case_study_cbf_qp_fails_before_fs_cbf_qp() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = case_study();
    cfg.gains.k_v = 2.5;
    cfg.controller = ControllerKind::CbfQp;
    let (cbf, _) = simulate(cfg.clone(), None, &dir.path().join("cbf")).unwrap();
    let t1 = cbf.summary.first_infeasible_time.expect("CBF-QP should become infeasible");
    assert!(t1 < cfg.horizon);

    cfg.controller = ControllerKind::FsCbfQp;
    let (fs, report) = simulate(cfg, None, &dir.path().join("fs")).unwrap();
    assert!(fs.summary.first_infeasible_time.map_or(true, |t2| t2 > t1));
    assert!(report.runtime > 0.0);

    let trace = std::fs::read_to_string(dir.path().join("fs/trace.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("step,t,px,py,v,psi,a_ref,omega_ref,a,omega,delta,volume,h_obs0,h_obs1,h_human0"));
    assert_eq!(trace.lines().count(), fs.trace.len() + 1);
    let snaps = std::fs::read_to_string(dir.path().join("fs/snapshots.jsonl")).unwrap();
    assert_eq!(snaps.lines().count(), fs.snapshots.len());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fs/summary.json")).unwrap()).unwrap();
    for key in ["reached_goal", "first_infeasible_time", "min_h", "runtime"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
}

#[test]
fn open_field_reaches_goal() {
    let cfg: ScenarioConfig = load_config(&repo("configs/open_field.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = simulate(cfg, None, dir.path()).unwrap();
    assert!(out.summary.reached_goal);
    assert!(!dir.path().join("snapshots.jsonl").exists());
}

#[test]
fn corridor_grid_scene_runs_from_its_config_directory() {
    let path = repo("configs/corridor.toml");
    let cfg: ScenarioConfig = load_config(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = simulate(cfg, path.parent(), dir.path()).unwrap();
    assert!(out.summary.reached_goal);
    assert!(out.summary.min_h.unwrap() >= -1e-3);
    assert!(out.trace.iter().all(|r| r.h_grid_min.is_some()));
}

#[test]
fn sweep_is_identical_across_worker_counts_and_repeats() {
    let spec = small_spec(4);
    let base = case_study();
    let a = sweep(&spec, &base, None, Some(1)).unwrap();
    let b = sweep(&spec, &base, None, Some(3)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let dir = tempfile::tempdir().unwrap();
    a.write(&dir.path().join("a")).unwrap();
    b.write(&dir.path().join("b")).unwrap();
    for f in ["report.json", "runs.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    assert_eq!(a.out_of_range_times(), 0);
}

#[test]
fn zero_width_ranges_repeat_the_same_run() {
    let mut spec = small_spec(3);
    spec.ranges.px = Some([1.0, 1.0]);
    spec.ranges.py = Some([1.0, 1.0]);
    spec.ranges.v = Some([1.3, 1.3]);
    spec.ranges.k_x = Some([1.0, 1.0]);
    spec.ranges.k_v = Some([2.5, 2.5]);
    let r = sweep(&spec, &case_study(), None, None).unwrap();
    for s in &r.samples[1..] {
        assert_eq!(s.runs, r.samples[0].runs);
        assert_eq!((s.px, s.py, s.v, s.k_x, s.k_v), (1.0, 1.0, Some(1.3), 1.0, 2.5));
    }
}

#[test]
fn alpha_list_yields_one_column_per_value() {
    let mut spec = small_spec(2);
    spec.alpha_v = vec![0.8, 1.0, 2.0];
    let r = sweep(&spec, &case_study(), None, None).unwrap();
    let names: Vec<&str> = r.variants.iter().map(|v| v.name.as_str()).collect();
    assert_eq!(names, ["cbf_qp", "fs_cbf_qp@0.8", "fs_cbf_qp@1", "fs_cbf_qp@2"]);
    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "index,px,py,v,k_x,k_v,T_cbf_qp,T_fs_cbf_qp@0.8,T_fs_cbf_qp@1,T_fs_cbf_qp@2"
    );
}

#[test]
fn wide_ranges_favor_the_volume_barrier() {
    let mut spec: SweepSpec = load_config(&repo("configs/sweep_scene3.toml")).unwrap();
    spec.samples = 16;
    spec.alpha_v = vec![1.0];
    let r = sweep(&spec, &case_study(), None, None).unwrap();
    let t1 = r.variant("cbf_qp").unwrap().mean_run_time.unwrap();
    let t2 = r.variant("fs_cbf_qp@1").unwrap().mean_run_time.unwrap();
    assert!(t2 > t1, "mean T2 {t2} vs T1 {t1}");
}

#[test]
fn invalid_sweep_specs_are_config_errors() {
    let mut spec = small_spec(0);
    let e = sweep(&spec, &case_study(), None, None).unwrap_err();
    assert!(e.is_config());
    spec.samples = 1;
    spec.ranges.k_v = Some([2.0, 1.0]);
    assert!(sweep(&spec, &case_study(), None, None).unwrap_err().is_config());
}

#[test]
fn shipped_grid_spec_is_monotone_and_clean() {
    let spec: GridSweepSpec = load_config(&repo("configs/gridsweep.toml")).unwrap();
    let r = gridsweep(&spec, None).unwrap();
    assert_eq!(r.violations(), 0);
    assert_eq!(r.monotonicity_violations, vec![("doubled".to_string(), Some(0))]);
    let dir = tempfile::tempdir().unwrap();
    r.write(dir.path()).unwrap();
    let m = std::fs::read_to_string(dir.path().join("base_mc_clipped.csv")).unwrap();
    assert_eq!(m.lines().count(), 60);
    assert!(m.lines().all(|l| l.split(',').count() == 60));
}

#[test]
fn shipped_fixtures_pass_volcheck() {
    let r = volcheck(&repo("fixtures/polytopes")).unwrap();
    assert_eq!(r.violations(), 0);
    let unit = r.fixtures.iter().find(|f| f.name == "unit_box").unwrap();
    assert_eq!((unit.mc, unit.smoothed_mc, unit.chebyshev_radius), (4.0, 4.0, 1.0));
    assert!((unit.ellipsoid_det - 1.0).abs() < 1e-6);
}
