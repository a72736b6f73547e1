//! Volume of the feasible control polytope and differentiable proxies of it.
//!
//! * [`mc_volume`] and [`smoothed_mc_volume`] estimate the volume by uniform
//!   sampling of the input box. No gradients.
//! * [`chebyshev_proxy`] reports the radius of the largest inscribed ball.
//! * [`ellipsoid_proxy`] reports `det B` of the maximum-volume inscribed
//!   ellipsoid.
//!
//! Both proxies carry gradients with respect to `(A, b)` computed from the
//! solver multipliers; [`proxy_gradient_fd`] provides the finite-difference
//! reference.

mod monte_carlo;
mod polytope;
mod proxy;

pub use monte_carlo::{mc_volume, smooth_step, smoothed_mc_volume, McConfig};
pub use polytope::{HPolytope, InputBox, PolytopeFixture, RowTag};
pub use proxy::{
    chebyshev_proxy, ellipsoid_proxy, ellipsoid_proxy_with, is_empty, proxy_gradient_fd,
    proxy_value, FdGradient, DEGENERACY_FLOOR,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solvers::{EllipsoidResult, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("malformed polytope: {0}")]
    Shape(String),
    #[error("invalid input box: {0}")]
    InvalidBox(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    MonteCarlo,
    SmoothedMonteCarlo,
    Chebyshev,
    Ellipsoid,
}

impl std::fmt::Display for VolumeMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            VolumeMethod::MonteCarlo => "mc",
            VolumeMethod::SmoothedMonteCarlo => "smoothed_mc",
            VolumeMethod::Chebyshev => "chebyshev",
            VolumeMethod::Ellipsoid => "ellipsoid",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeResult {
    /// Nonnegative proxy value: radius (Chebyshev), `det B` (ellipsoid) or
    /// control-space volume (sampling).
    pub value: f64,
    pub grad_a: Option<DMatrix<f64>>,
    pub grad_b: Option<DVector<f64>>,
    pub method: VolumeMethod,
    /// Empty or below the degeneracy floor.
    pub degenerate: bool,
    /// Standard error of the sampling estimators.
    pub std_error: Option<f64>,
    /// Rows whose multiplier exceeds the activity tolerance.
    pub active_set: Vec<usize>,
    /// Gradient taken at a point where the proxy is not differentiable
    /// (degenerate active set); values are the solver's multipliers as-is.
    pub nonsmooth: bool,
    /// The ellipsoid solver gave up and the Chebyshev fallback was used.
    pub not_converged: bool,
    /// Raw ellipsoid solution, kept for warm starts.
    pub ellipsoid: Option<EllipsoidResult>,
}

impl VolumeResult {
    pub(crate) fn empty(method: VolumeMethod) -> Self {
        Self {
            value: 0.0,
            grad_a: None,
            grad_b: None,
            method,
            degenerate: true,
            std_error: None,
            active_set: Vec::new(),
            nonsmooth: false,
            not_converged: false,
            ellipsoid: None,
        }
    }
}
