use super::{check_range, create_dir, csv_writer, fmt_opt, io_err, pool, write_json, ExperimentError};
use crate::scenario::{ControllerKind, Scenario, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Uniform ranges, each `[lower, upper]`; a missing range keeps the
/// scenario's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepRanges {
    pub px: Option<[f64; 2]>,
    pub py: Option<[f64; 2]>,
    pub v: Option<[f64; 2]>,
    #[serde(alias = "k_p")]
    pub k_x: Option<[f64; 2]>,
    pub k_v: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Scenario file, relative to the spec file.
    pub scenario: PathBuf,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_controllers")]
    pub controllers: Vec<ControllerKind>,
    /// One FS-CBF-QP variant per entry.
    #[serde(default = "default_alpha")]
    pub alpha_v: Vec<f64>,
    /// Overrides the scenario horizon.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub ranges: SweepRanges,
}

fn default_controllers() -> Vec<ControllerKind> {
    vec![ControllerKind::CbfQp, ControllerKind::FsCbfQp]
}

fn default_alpha() -> Vec<f64> {
    vec![1.0]
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.samples == 0 {
            return Err(ExperimentError::Config("samples must be at least 1".into()));
        }
        if self.controllers.is_empty() {
            return Err(ExperimentError::Config("no controllers to compare".into()));
        }
        if self.controllers.contains(&ControllerKind::FsCbfQp)
            && (self.alpha_v.is_empty() || self.alpha_v.iter().any(|a| !(*a > 0.0)))
        {
            return Err(ExperimentError::Config("alpha_v needs positive entries".into()));
        }
        let r = &self.ranges;
        for (name, range) in [("px", r.px), ("py", r.py), ("v", r.v), ("k_x", r.k_x), ("k_v", r.k_v)] {
            if let Some(range) = range {
                check_range(name, range)?;
            }
        }
        for (name, range) in [("k_x", r.k_x), ("k_v", r.k_v)] {
            if range.is_some_and(|r| !(r[0] > 0.0)) {
                return Err(ExperimentError::Config(format!("{name} must stay positive")));
            }
        }
        if self.horizon.is_some_and(|h| !(h > 0.0)) {
            return Err(ExperimentError::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    fn variants(&self) -> Vec<(String, ControllerKind, Option<f64>)> {
        let mut out = Vec::new();
        for &c in &self.controllers {
            match c {
                ControllerKind::CbfQp => out.push((c.to_string(), c, None)),
                ControllerKind::FsCbfQp => {
                    out.extend(self.alpha_v.iter().map(|&a| (format!("{c}@{a}"), c, Some(a))))
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: String,
    /// `min(horizon, first infeasible time)`; absent when the run errored.
    pub run_time: Option<f64>,
    pub first_infeasible_time: Option<f64>,
    pub reached_goal: bool,
    pub min_h: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub px: f64,
    pub py: f64,
    pub v: Option<f64>,
    pub k_x: f64,
    pub k_v: f64,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    pub controller: ControllerKind,
    pub alpha_v: Option<f64>,
    /// Mean run time over the runs that did not error.
    pub mean_run_time: Option<f64>,
    pub infeasible_runs: usize,
    pub reached_goal_runs: usize,
    pub failed_runs: usize,
    pub min_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub horizon: f64,
    pub spec: SweepSpec,
    pub variants: Vec<VariantSummary>,
    pub samples: Vec<SampleRecord>,
}

fn draw(rng: &mut ChaCha8Rng, range: Option<[f64; 2]>, base: f64) -> f64 {
    match range {
        Some([lo, hi]) if lo < hi => rng.gen_range(lo..hi),
        Some([lo, _]) => lo,
        None => base,
    }
}

/// Sample `spec.samples` perturbed copies of `base` and run every variant
/// on each. Sample `i` draws from stream `i` of a generator seeded with
/// `spec.seed`, so results do not depend on the worker count.
pub fn sweep(spec: &SweepSpec, base: &ScenarioConfig, base_dir: Option<&Path>, jobs: Option<usize>) -> Result<SweepReport, ExperimentError> {
    spec.validate()?;
    let mut base = base.clone();
    if let Some(h) = spec.horizon {
        base.horizon = h;
    }
    base.validate()?;
    let model = base.model.build();
    let pos = model.position_indices();
    if pos.len() < 2 && (spec.ranges.px.is_some() || spec.ranges.py.is_some()) {
        return Err(ExperimentError::Config("model has no planar position to perturb".into()));
    }
    let v_index = model.state_labels().iter().position(|l| *l == "v");
    if spec.ranges.v.is_some() && v_index.is_none() {
        return Err(ExperimentError::Config("model has no speed state to perturb".into()));
    }
    let variants = spec.variants();

    let run_sample = |index: usize| -> SampleRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(index as u64);
        let r = &spec.ranges;
        let mut cfg = base.clone();
        let px = draw(&mut rng, r.px, cfg.initial_state[pos[0]]);
        let py = draw(&mut rng, r.py, cfg.initial_state.get(pos[1]).copied().unwrap_or(0.0));
        let v = v_index.map(|k| draw(&mut rng, r.v, cfg.initial_state[k]));
        let k_x = draw(&mut rng, r.k_x, cfg.gains.k_x);
        let k_v = draw(&mut rng, r.k_v, cfg.gains.k_v);
        cfg.initial_state[pos[0]] = px;
        if pos.len() > 1 {
            cfg.initial_state[pos[1]] = py;
        }
        if let (Some(k), Some(v)) = (v_index, v) {
            cfg.initial_state[k] = v;
        }
        cfg.gains.k_x = k_x;
        cfg.gains.k_v = k_v;
        cfg.seed = spec.seed.wrapping_add(index as u64);

        let runs = variants
            .iter()
            .map(|(name, controller, alpha)| {
                let mut c = cfg.clone();
                c.controller = *controller;
                if let Some(a) = alpha {
                    c.fs.alpha_v = *a;
                }
                match Scenario::with_base_dir(c, base_dir).and_then(|s| s.run()) {
                    Ok(o) => RunRecord {
                        variant: name.clone(),
                        run_time: Some(o.summary.run_time),
                        first_infeasible_time: o.summary.first_infeasible_time,
                        reached_goal: o.summary.reached_goal,
                        min_h: o.summary.min_h,
                        error: None,
                    },
                    Err(e) => RunRecord {
                        variant: name.clone(),
                        run_time: None,
                        first_infeasible_time: None,
                        reached_goal: false,
                        min_h: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect();
        SampleRecord {
            index,
            px,
            py,
            v,
            k_x,
            k_v,
            runs,
        }
    };

    let samples: Vec<SampleRecord> =
        pool(jobs)?.install(|| (0..spec.samples).into_par_iter().map(run_sample).collect());

    let summaries = variants
        .iter()
        .enumerate()
        .map(|(j, (name, controller, alpha))| {
            let runs: Vec<&RunRecord> = samples.iter().map(|s| &s.runs[j]).collect();
            let times: Vec<f64> = runs.iter().filter_map(|r| r.run_time).collect();
            VariantSummary {
                name: name.clone(),
                controller: *controller,
                alpha_v: *alpha,
                mean_run_time: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
                infeasible_runs: runs.iter().filter(|r| r.first_infeasible_time.is_some()).count(),
                reached_goal_runs: runs.iter().filter(|r| r.reached_goal).count(),
                failed_runs: runs.iter().filter(|r| r.error.is_some()).count(),
                min_h: runs.iter().filter_map(|r| r.min_h).reduce(f64::min),
            }
        })
        .collect();

    Ok(SweepReport {
        scenario: base.name.clone(),
        horizon: base.horizon,
        spec: spec.clone(),
        variants: summaries,
        samples,
    })
}

impl SweepReport {
    /// Writes `report.json` and `runs.csv` (one row per sample, one time
    /// column per variant).
    pub fn write(&self, out: &Path) -> Result<(), ExperimentError> {
        create_dir(out)?;
        write_json(&out.join("report.json"), self)?;
        let path = out.join("runs.csv");
        let mut w = csv_writer(&path)?;
        let mut header: Vec<String> = ["index", "px", "py", "v", "k_x", "k_v"].map(String::from).to_vec();
        header.extend(self.variants.iter().map(|v| format!("T_{}", v.name)));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![
                s.index.to_string(),
                s.px.to_string(),
                s.py.to_string(),
                fmt_opt(s.v),
                s.k_x.to_string(),
                s.k_v.to_string(),
            ];
            rec.extend(s.runs.iter().map(|r| fmt_opt(r.run_time)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(io_err(&path))?;
        Ok(())
    }

    pub fn variant(&self, name: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.name == name)
    }

    /// Reported times outside `[0, horizon]`.
    pub fn out_of_range_times(&self) -> usize {
        self.samples
            .iter()
            .flat_map(|s| &s.runs)
            .filter_map(|r| r.run_time)
            .filter(|t| !(*t >= 0.0 && *t <= self.horizon))
            .count()
    }
}
