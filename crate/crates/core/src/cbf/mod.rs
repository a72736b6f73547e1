//! Barrier bookkeeping and the two safety filters.
//!
//! Each barrier contributes one affine row `a·u ≤ b` on the control,
//! built from its higher-order chain `ψ⁰ = h`, `ψᵏ = ψ̇ᵏ⁻¹ + αᵏ(ψᵏ⁻¹)`.
//! Together with the input box the rows form the feasible control
//! polytope whose volume the FS-CBF-QP keeps away from zero.

mod controller;
mod hocbf;

pub use controller::{
    boundary_margin, cbf_qp_control, fs_cbf_qp_control, volume_of_state,
    volume_state_time_gradients, ControlDecision, ControlStatus, FsCbfController, FsCbfParams,
    VolumeGradients,
};
pub use hocbf::{assemble, assemble_polytope, hocbf_row, Assembly, HocbfRow};

use crate::solvers::SolverError;
use crate::volume::VolumeError;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CbfError {
    #[error("invalid class-K chain: {0}")]
    InvalidChain(String),
    #[error("barrier {label}: relative degree {degree} is not supported")]
    UnsupportedDegree { label: String, degree: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid controller parameters: {0}")]
    Params(String),
    #[error("volume proxy is degenerate (value {value:e})")]
    DegenerateVolume { value: f64 },
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Value and derivatives of a barrier `h(t, x)`.
///
/// `hess`, `grad_rate` and `rate_rate` are only read for relative
/// degree two.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub h: f64,
    /// `∂h/∂x`
    pub grad: DVector<f64>,
    /// `∂h/∂t`
    pub rate: f64,
    /// `∂²h/∂x²`
    pub hess: DMatrix<f64>,
    /// `∂²h/∂x∂t`
    pub grad_rate: DVector<f64>,
    /// `∂²h/∂t²`
    pub rate_rate: f64,
}

pub trait BarrierFunction: Send + Sync + fmt::Debug {
    fn eval(&self, t: f64, x: &DVector<f64>) -> BarrierEval;
}

/// Linear class-K gains `αᵏ(s) = gainₖ·s`, one per chain level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassKChain {
    gains: Vec<f64>,
}

impl ClassKChain {
    pub fn new(gains: Vec<f64>) -> Result<Self, CbfError> {
        if gains.is_empty() {
            return Err(CbfError::InvalidChain("no gains".into()));
        }
        if let Some(g) = gains.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return Err(CbfError::InvalidChain(format!("gain {g} is not positive")));
        }
        Ok(Self { gains })
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, CbfError> {
        Self::new(self.gains.iter().map(|g| g * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for ClassKChain {
    type Error = CbfError;
    fn try_from(gains: Vec<f64>) -> Result<Self, CbfError> {
        Self::new(gains)
    }
}

impl From<ClassKChain> for Vec<f64> {
    fn from(c: ClassKChain) -> Self {
        c.gains
    }
}

/// One constraint: a barrier function and its class-K chain. The chain
/// length is the relative degree.
#[derive(Clone)]
pub struct BarrierSpec {
    pub label: String,
    pub chain: ClassKChain,
    pub function: Arc<dyn BarrierFunction>,
}

impl BarrierSpec {
    pub fn new(label: impl Into<String>, chain: ClassKChain, function: Arc<dyn BarrierFunction>) -> Self {
        Self {
            label: label.into(),
            chain,
            function,
        }
    }

    pub fn relative_degree(&self) -> usize {
        self.chain.len()
    }

    pub fn eval(&self, t: f64, x: &DVector<f64>) -> BarrierEval {
        self.function.eval(t, x)
    }
}

impl fmt::Debug for BarrierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierSpec")
            .field("label", &self.label)
            .field("chain", &self.chain)
            .field("function", &self.function)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_validation() {
        assert!(ClassKChain::new(vec![]).is_err());
        assert!(ClassKChain::new(vec![1.0, 0.0]).is_err());
        assert!(ClassKChain::new(vec![1.0, f64::NAN]).is_err());
        let c = ClassKChain::new(vec![2.0, 6.0]).unwrap();
        assert_eq!(c.scaled(2.0).unwrap().gains(), &[4.0, 12.0]);
        let parsed: Result<ClassKChain, _> = serde_json::from_str("[1.0, -1.0]");
        assert!(parsed.is_err());
    }
}
