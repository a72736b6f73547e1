use super::{create_dir, csv_writer, fmt_opt, io_err, write_json, ExperimentError};
use crate::cbf::ControlStatus;
use crate::scenario::{RunSummary, Scenario, ScenarioConfig, SimOutcome};
use serde::Serialize;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    #[serde(flatten)]
    pub summary: RunSummary,
    pub seed: u64,
    /// Wall-clock seconds spent simulating.
    pub runtime: f64,
}

/// Run one scenario and write `trace.csv`, `summary.json` and, when a
/// snapshot stride is set, `snapshots.jsonl` into `out`.
pub fn simulate(
    cfg: ScenarioConfig,
    base_dir: Option<&Path>,
    out: &Path,
) -> Result<(SimOutcome, SimulationReport), ExperimentError> {
    let seed = cfg.seed;
    let scenario = Scenario::with_base_dir(cfg, base_dir)?;
    let start = Instant::now();
    let outcome = scenario.run()?;
    let report = SimulationReport {
        summary: outcome.summary.clone(),
        seed,
        runtime: start.elapsed().as_secs_f64(),
    };
    write_simulation(&scenario, &outcome, &report, out)?;
    Ok((outcome, report))
}

pub fn write_simulation(
    scenario: &Scenario,
    outcome: &SimOutcome,
    report: &SimulationReport,
    out: &Path,
) -> Result<(), ExperimentError> {
    create_dir(out)?;
    let cfg = scenario.config();
    let model = scenario.model();
    let states = model.state_labels();
    let controls = model.control_labels();

    let mut header: Vec<String> = vec!["step".into(), "t".into()];
    header.extend(states.iter().map(|s| s.to_string()));
    header.extend(controls.iter().map(|c| format!("{c}_ref")));
    header.extend(controls.iter().map(|c| c.to_string()));
    header.extend(["delta", "volume"].map(String::from));
    header.extend((0..cfg.obstacles.len()).map(|i| format!("h_obs{i}")));
    header.extend((0..cfg.humans.len()).map(|i| format!("h_human{i}")));
    header.extend(
        [
            "h_grid_min",
            "status",
            "boundary_margin",
            "u_ref_feasible",
            "cbf_qp_margin",
            "fs_row_dropped",
        ]
        .map(String::from),
    );

    let path = out.join("trace.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(&header)?;
    for r in &outcome.trace {
        let mut rec: Vec<String> = vec![r.step.to_string(), r.t.to_string()];
        rec.extend(r.state.iter().map(f64::to_string));
        rec.extend(r.u_ref.iter().map(f64::to_string));
        rec.extend(r.u.iter().map(f64::to_string));
        rec.push(fmt_opt(r.delta));
        rec.push(fmt_opt(r.volume));
        rec.extend(r.h.iter().map(f64::to_string));
        rec.push(fmt_opt(r.h_grid_min));
        rec.push(
            match r.status {
                ControlStatus::Ok => "ok",
                ControlStatus::Infeasible => "infeasible",
            }
            .into(),
        );
        rec.push(r.boundary_margin.to_string());
        rec.push(r.u_ref_feasible.to_string());
        rec.push(fmt_opt(r.cbf_qp_margin));
        rec.push(r.fs_row_dropped.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_err(&path))?;

    write_json(&out.join("summary.json"), report)?;

    if !outcome.snapshots.is_empty() {
        let path = out.join("snapshots.jsonl");
        let mut text = String::new();
        for s in &outcome.snapshots {
            text.push_str(&serde_json::to_string(s)?);
            text.push('\n');
        }
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(io_err(&path))?;
    }
    Ok(())
}
