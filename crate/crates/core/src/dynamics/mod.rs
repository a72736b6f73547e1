//! Plant models, the goal-tracking reference controller, pedestrians and
//! the barrier constructors used by the scenarios.

mod barriers;
mod grid;
mod reference;
mod social;

pub use barriers::{circle_barrier, CircleBarrier};
pub use grid::{grid_ray_barriers, ray_hits, GridError, OccupancyGrid, RayHit, RaySettings};
pub use reference::{reference_control, unicycle_reference, ControllerGains};
pub use social::{social_force_step, HumanAgent, SfmParams};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Control-affine system `ẋ = f(x) + g(x) u`.
pub trait DynamicsModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;
    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// `∂f/∂x`.
    fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn state_labels(&self) -> Vec<&'static str>;
    fn control_labels(&self) -> Vec<&'static str>;
    /// Indices of the planar position inside the state.
    fn position_indices(&self) -> Vec<usize>;
    /// State coordinates that are angles and get wrapped after each step.
    fn angle_indices(&self) -> Vec<usize> {
        Vec::new()
    }
}

/// Wrap an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// One explicit Euler step, angles wrapped afterwards.
pub fn step_euler(
    model: &dyn DynamicsModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let xdot = model.drift(x) + model.input_matrix(x) * u;
    let mut next = x + xdot * dt;
    for i in model.angle_indices() {
        next[i] = wrap_angle(next[i]);
    }
    next
}

/// Planar velocity-controlled point, `ṗ = u`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleIntegrator;

impl DynamicsModel for SingleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn drift(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(2)
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(2, 2)
    }
    fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
    fn state_labels(&self) -> Vec<&'static str> {
        vec!["px", "py"]
    }
    fn control_labels(&self) -> Vec<&'static str> {
        vec!["ux", "uy"]
    }
    fn position_indices(&self) -> Vec<usize> {
        vec![0, 1]
    }
}

/// Acceleration-controlled point on a line, state `(p, v)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleIntegrator;

impl DynamicsModel for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1], 0.0])
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
    fn drift_jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }
    fn state_labels(&self) -> Vec<&'static str> {
        vec!["p", "v"]
    }
    fn control_labels(&self) -> Vec<&'static str> {
        vec!["a"]
    }
    fn position_indices(&self) -> Vec<usize> {
        vec![0]
    }
}

/// Fixed-speed car, state `(px, py, θ)`, control `θ̇`.
#[derive(Debug, Clone, Copy)]
pub struct Dubins {
    pub speed: f64,
}

impl DynamicsModel for Dubins {
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![self.speed * x[2].cos(), self.speed * x[2].sin(), 0.0])
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0])
    }
    fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(3, 3);
        j[(0, 2)] = -self.speed * x[2].sin();
        j[(1, 2)] = self.speed * x[2].cos();
        j
    }
    fn state_labels(&self) -> Vec<&'static str> {
        vec!["px", "py", "theta"]
    }
    fn control_labels(&self) -> Vec<&'static str> {
        vec!["omega"]
    }
    fn position_indices(&self) -> Vec<usize> {
        vec![0, 1]
    }
    fn angle_indices(&self) -> Vec<usize> {
        vec![2]
    }
}

/// Dynamic unicycle, state `(px, py, v, ψ)`, control `(a, ω)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unicycle;

impl DynamicsModel for Unicycle {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[2] * x[3].cos(), x[2] * x[3].sin(), 0.0, 0.0])
    }
    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    }
    fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (s, c) = x[3].sin_cos();
        let mut j = DMatrix::zeros(4, 4);
        j[(0, 2)] = c;
        j[(0, 3)] = -x[2] * s;
        j[(1, 2)] = s;
        j[(1, 3)] = x[2] * c;
        j
    }
    fn state_labels(&self) -> Vec<&'static str> {
        vec!["px", "py", "v", "psi"]
    }
    fn control_labels(&self) -> Vec<&'static str> {
        vec!["a", "omega"]
    }
    fn position_indices(&self) -> Vec<usize> {
        vec![0, 1]
    }
    fn angle_indices(&self) -> Vec<usize> {
        vec![3]
    }
}

/// Serializable model choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    SingleIntegrator,
    Dubins {
        #[serde(default = "default_dubins_speed")]
        speed: f64,
    },
    Unicycle,
}

fn default_dubins_speed() -> f64 {
    1.0
}

impl ModelKind {
    pub fn build(&self) -> Box<dyn DynamicsModel> {
        match *self {
            ModelKind::SingleIntegrator => Box::new(SingleIntegrator),
            ModelKind::Dubins { speed } => Box::new(Dubins { speed }),
            ModelKind::Unicycle => Box::new(Unicycle),
        }
    }

    /// Input box used when a config does not give one.
    pub fn default_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ModelKind::SingleIntegrator => (vec![-1.0, -1.0], vec![1.0, 1.0]),
            ModelKind::Dubins { .. } => (vec![-0.5], vec![0.5]),
            ModelKind::Unicycle => (vec![-3.0, -3.0], vec![3.0, 3.0]),
        }
    }

    /// Relative degree of a position-distance barrier for this model.
    pub fn distance_degree(&self) -> usize {
        match self {
            ModelKind::SingleIntegrator => 1,
            _ => 2,
        }
    }
}
