use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp_from, QpProblem, QpSettings, QpStatus};
use super::SolverError;

/// Weight of the `μ/2 ‖(c, r)‖²` term that makes the Chebyshev center unique.
pub const CHEBYSHEV_REGULARIZATION: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChebyshevStatus {
    /// Positive radius.
    Interior,
    /// Radius ≤ 0: no interior (possibly empty).
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevResult {
    pub center: DVector<f64>,
    /// Negative when the polytope is empty.
    pub radius: f64,
    /// Multiplier per input row; `∂r/∂bᵢ` at a non-degenerate optimum.
    pub duals: DVector<f64>,
    pub active_set: Vec<usize>,
    pub status: ChebyshevStatus,
}

/// Largest ball `{c + r z : ‖z‖ ≤ 1}` inside `{u : A u ≤ b}`.
///
/// Solved as the QP `min −r + μ/2 ‖(c, r)‖²` subject to
/// `aᵢ·c + ‖aᵢ‖ r ≤ bᵢ`, started from the always-feasible point
/// `c = 0, r = minᵢ bᵢ/‖aᵢ‖`.
pub fn solve_chebyshev(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<ChebyshevResult, SolverError> {
    let m = a.ncols();
    if a.nrows() != b.len() {
        return Err(SolverError::Dimension(format!(
            "A has {} rows but b has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    if m == 0 || a.nrows() == 0 {
        return Err(SolverError::Dimension(
            "Chebyshev ball needs at least one row and one column".into(),
        ));
    }

    let norms: Vec<f64> = (0..a.nrows()).map(|i| a.row(i).norm()).collect();
    let mut kept = Vec::new();
    let mut empty_offset: Option<f64> = None;
    for (i, &nrm) in norms.iter().enumerate() {
        if nrm > 0.0 {
            kept.push(i);
        } else if b[i] < 0.0 {
            empty_offset = Some(empty_offset.map_or(b[i], |v: f64| v.min(b[i])));
        }
    }
    if let Some(radius) = empty_offset {
        return Ok(ChebyshevResult {
            center: DVector::zeros(m),
            radius,
            duals: DVector::zeros(a.nrows()),
            active_set: Vec::new(),
            status: ChebyshevStatus::Empty,
        });
    }
    if kept.is_empty() {
        return Err(SolverError::Unbounded);
    }

    let rows = kept.len();
    let mut lhs = DMatrix::zeros(rows, m + 1);
    let mut rhs = DVector::zeros(rows);
    for (k, &i) in kept.iter().enumerate() {
        lhs.view_mut((k, 0), (1, m)).copy_from(&a.row(i));
        lhs[(k, m)] = norms[i];
        rhs[k] = b[i];
    }
    let mut linear = DVector::zeros(m + 1);
    linear[m] = -1.0;
    let problem = QpProblem::new(
        DMatrix::identity(m + 1, m + 1) * CHEBYSHEV_REGULARIZATION,
        linear,
        lhs,
        rhs.clone(),
    )?;

    let mut start = DVector::zeros(m + 1);
    start[m] = kept
        .iter()
        .map(|&i| b[i] / norms[i])
        .fold(f64::INFINITY, f64::min);

    let settings = QpSettings {
        max_iterations: 500,
        ..QpSettings::default()
    };
    let sol = solve_qp_from(&problem, &start, &settings)?;
    let radius = sol.x[m];
    // Stationarity in r gives Σ λᵢ‖aᵢ‖ = 1 − μr; a radius of order 1/μ
    // means no row bounds it.
    if CHEBYSHEV_REGULARIZATION * radius > 0.5 || sol.status != QpStatus::Optimal {
        if sol.status == QpStatus::Optimal {
            return Err(SolverError::Unbounded);
        }
        return Err(SolverError::NotConverged {
            iterations: sol.iterations,
        });
    }

    let mut duals = DVector::zeros(a.nrows());
    let mut active_set = Vec::new();
    for (k, &i) in kept.iter().enumerate() {
        duals[i] = sol.duals[k];
        if sol.active_set.contains(&k) {
            active_set.push(i);
        }
    }
    Ok(ChebyshevResult {
        center: sol.x.rows(0, m).into_owned(),
        radius,
        duals,
        active_set,
        status: if radius > 0.0 {
            ChebyshevStatus::Interior
        } else {
            ChebyshevStatus::Empty
        },
    })
}
