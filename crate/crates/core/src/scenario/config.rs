use crate::cbf::{ClassKChain, FsCbfParams};
use crate::dynamics::{ControllerGains, HumanAgent, ModelKind, RaySettings};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    CbfQp,
    FsCbfQp,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::CbfQp => "cbf_qp",
            ControllerKind::FsCbfQp => "fs_cbf_qp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleObstacle {
    pub center: [f64; 2],
    /// Keep-out distance from the center.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Class-K chains per constraint class; missing entries fall back to
/// `[1]` for degree-one models and `[2, 6]` otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub obstacle: Option<ClassKChain>,
    pub human: Option<ClassKChain>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrowdConfig {
    /// Humans are pushed away from the robot like from another pedestrian.
    pub robot_repels: bool,
    pub robot_radius: f64,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        Self {
            robot_repels: true,
            robot_radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// PGM or JSON file, relative paths resolved against the config file.
    pub path: PathBuf,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    #[serde(default)]
    pub origin: [f64; 2],
    /// PGM pixels below this value are occupied.
    #[serde(default = "default_threshold")]
    pub threshold: u16,
    #[serde(default)]
    pub rays: RaySettings,
}

fn default_resolution() -> f64 {
    0.05
}

fn default_threshold() -> u16 {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelKind,
    pub initial_state: Vec<f64>,
    pub goal: [f64; 2],
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub obstacles: Vec<CircleObstacle>,
    #[serde(default)]
    pub humans: Vec<HumanAgent>,
    #[serde(default)]
    pub crowd: CrowdConfig,
    #[serde(default)]
    pub chains: ChainConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_controller")]
    pub controller: ControllerKind,
    #[serde(default)]
    pub fs: FsCbfParams,
    /// Echoed in run outputs; the closed loop itself draws no random
    /// numbers.
    #[serde(default)]
    pub seed: u64,
    /// Write a polytope snapshot every this many steps; 0 disables them.
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn default_goal_tolerance() -> f64 {
    0.1
}

fn default_dt() -> f64 {
    0.01
}

fn default_horizon() -> f64 {
    7.0
}

fn default_controller() -> ControllerKind {
    ControllerKind::FsCbfQp
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |m: String| Err(ScenarioError::Config(m));
        let model = self.model.build();
        if self.initial_state.len() != model.state_dim() {
            return err(format!(
                "initial_state has {} entries, the model has {}",
                self.initial_state.len(),
                model.state_dim()
            ));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return err("initial_state must be finite".into());
        }
        if !(self.dt > 0.0) {
            return err("dt must be positive".into());
        }
        if !(self.horizon >= self.dt) {
            return err("horizon must be at least dt".into());
        }
        if !self.gains.is_valid() {
            return err("controller gains must be positive".into());
        }
        if let ModelKind::Dubins { speed } = self.model {
            if !(speed > 0.0) {
                return err("Dubins speed must be positive".into());
            }
        }
        if let Some(o) = self.obstacles.iter().find(|o| !(o.radius > 0.0)) {
            return err(format!("obstacle at {:?} needs a positive radius", o.center));
        }
        if self.humans.iter().any(|h| !h.is_valid()) {
            return err("humans need positive desired_speed, tau and range".into());
        }
        if !(self.goal_tolerance > 0.0) {
            return err("goal_tolerance must be positive".into());
        }
        self.fs.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Read a TOML or JSON (by extension) config file.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text, path.extension().and_then(|e| e.to_str()) == Some("json"))
        .map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_config<T: DeserializeOwned>(text: &str, json: bool) -> Result<T, String> {
    if json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
