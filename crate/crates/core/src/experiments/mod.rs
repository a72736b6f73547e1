//! Batch studies behind the command-line tool: traced single runs,
//! randomized sensitivity sweeps, state-space grid sweeps and volume
//! cross-checks. Every writer is deterministic for a given input.

mod gridsweep;
mod simulate;
mod sweep;
mod volcheck;

pub use gridsweep::{gridsweep, ChainVariant, GridSweepReport, GridSweepSpec, MethodGrid};
pub use simulate::{simulate, write_simulation, SimulationReport};
pub use sweep::{sweep, RunRecord, SampleRecord, SweepReport, SweepSpec, VariantSummary};
pub use volcheck::{volcheck, FixtureReport, MethodTiming, VolcheckReport};

use crate::scenario::ScenarioError;
use serde::Serialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Compute(String),
}

impl ExperimentError {
    /// Problems with the user's input, as opposed to I/O or numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, ExperimentError::Config(_) | ExperimentError::Scenario(ScenarioError::Config(_)))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ExperimentError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Validates a `[lower, upper]` pair.
fn check_range(name: &str, r: [f64; 2]) -> Result<(), ExperimentError> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(ExperimentError::Config(format!(
            "{name} range [{}, {}] needs finite lower <= upper",
            r[0], r[1]
        )));
    }
    Ok(())
}

/// Worker pool of the requested size, or rayon's default when `None`.
fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, ExperimentError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(ExperimentError::Config("worker count must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| ExperimentError::Compute(e.to_string()))
}
