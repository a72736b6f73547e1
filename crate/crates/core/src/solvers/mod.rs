//! Dense solvers for the small convex programs used by the controller:
//! strictly convex QPs, the regularized Chebyshev-ball LP and the
//! maximum-volume inscribed ellipsoid.
//!
//! Every solver is a pure function of its inputs. Problems are tiny
//! (a handful of decision variables, a few dozen rows) so everything is
//! dense and factorizations are recomputed rather than updated.

mod chebyshev;
mod ellipsoid;
mod qp;

pub use chebyshev::{solve_chebyshev, ChebyshevResult, ChebyshevStatus, CHEBYSHEV_REGULARIZATION};
pub use ellipsoid::{solve_max_ellipsoid, solve_max_ellipsoid_with, EllipsoidResult, EllipsoidSettings};
pub use qp::{
    solve_qp, solve_qp_from, solve_qp_with, QpProblem, QpSettings, QpSolution, QpStatus,
    ACTIVITY_TOLERANCE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cost matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("starting point violates constraint {row} by {violation:e}")]
    InfeasibleStart { row: usize, violation: f64 },
    #[error("polytope has no interior (Chebyshev radius {radius:e})")]
    DegeneratePolytope { radius: f64 },
    #[error("Chebyshev radius is unbounded; the polytope needs bounding rows")]
    Unbounded,
    #[error("ellipsoid solver did not converge after {iterations} Newton steps")]
    NotConverged { iterations: usize },
}
