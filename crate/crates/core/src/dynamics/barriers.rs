use super::DynamicsModel;
use crate::cbf::{BarrierEval, BarrierFunction, BarrierSpec, ClassKChain};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// `h = σ(‖p − c(t)‖² − R²)` with `c(t) = c₀ + v·(t − t₀)`; `σ = 1`
/// keeps the robot outside the disk, `σ = −1` inside.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleBarrier {
    pub center: Vec<f64>,
    pub velocity: Vec<f64>,
    pub t0: f64,
    pub radius: f64,
    pub sign: f64,
    /// Where the position sits inside the state.
    pub position: Vec<usize>,
    pub state_dim: usize,
}

impl CircleBarrier {
    pub fn avoid(center: Vec<f64>, radius: f64, position: Vec<usize>, state_dim: usize) -> Self {
        let velocity = vec![0.0; center.len()];
        Self {
            center,
            velocity,
            t0: 0.0,
            radius,
            sign: 1.0,
            position,
            state_dim,
        }
    }

    pub fn keep_inside(center: Vec<f64>, radius: f64, position: Vec<usize>, state_dim: usize) -> Self {
        Self {
            sign: -1.0,
            ..Self::avoid(center, radius, position, state_dim)
        }
    }

    /// Center moving at `velocity`, located at `center` at time `t0`.
    pub fn moving(mut self, velocity: Vec<f64>, t0: f64) -> Self {
        self.velocity = velocity;
        self.t0 = t0;
        self
    }

    pub fn center_at(&self, t: f64) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.velocity)
            .map(|(c, v)| c + v * (t - self.t0))
            .collect()
    }
}

impl BarrierFunction for CircleBarrier {
    fn eval(&self, t: f64, x: &DVector<f64>) -> BarrierEval {
        let n = self.state_dim;
        let s = self.sign;
        let c = self.center_at(t);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut grad_rate = DVector::zeros(n);
        let mut dist_sq = 0.0;
        let mut rate = 0.0;
        let mut speed_sq = 0.0;
        for (k, &i) in self.position.iter().enumerate() {
            let d = x[i] - c[k];
            let v = self.velocity[k];
            dist_sq += d * d;
            speed_sq += v * v;
            rate -= 2.0 * s * d * v;
            grad[i] = 2.0 * s * d;
            hess[(i, i)] = 2.0 * s;
            grad_rate[i] = -2.0 * s * v;
        }
        BarrierEval {
            h: s * (dist_sq - self.radius * self.radius),
            grad,
            rate,
            hess,
            grad_rate,
            rate_rate: 2.0 * s * speed_sq,
        }
    }
}

/// Avoidance barrier `‖p − c‖² − d_min²` for a model's planar position.
/// The relative degree is the chain length; a center moving at
/// `velocity` is anchored at `center` at time `t0`.
pub fn circle_barrier(
    label: impl Into<String>,
    model: &dyn DynamicsModel,
    center: &[f64],
    radius_min: f64,
    chain: ClassKChain,
    velocity: Option<&[f64]>,
    t0: f64,
) -> BarrierSpec {
    let mut f = CircleBarrier::avoid(center.to_vec(), radius_min, model.position_indices(), model.state_dim());
    if let Some(v) = velocity {
        f = f.moving(v.to_vec(), t0);
    }
    BarrierSpec::new(label, chain, Arc::new(f))
}
