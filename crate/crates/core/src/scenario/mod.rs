//! Scenario configuration and the closed-loop simulator.

mod config;
mod sim;

pub use config::{
    load_config, parse_config, BoundsConfig, ChainConfig, CircleObstacle, ControllerKind, CrowdConfig,
    GridConfig, ScenarioConfig,
};
pub use sim::{RunSummary, Scenario, SimOutcome, SimState, Snapshot, TraceRow};

use crate::cbf::CbfError;
use crate::dynamics::GridError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Cbf(#[from] CbfError),
}
