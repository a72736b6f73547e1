//! Dense active-set QP solvers for
//!
//! ```text
//!   minimize   ½ xᵀ Q x + qᵀ x
//!   subject to A x ≤ b
//! ```
//!
//! [`solve_qp`] is the dual method of Goldfarb and Idnani: it starts at the
//! unconstrained minimizer and adds violated rows one at a time, so it needs
//! no feasible starting point and reports infeasibility when a violated row
//! cannot be satisfied by any primal or dual step.
//!
//! [`solve_qp_from`] is a primal active-set method started from a known
//! feasible point. It is used for badly scaled problems such as the
//! regularized LP behind the Chebyshev ball, where the unconstrained
//! minimizer sits at distance `1/μ`.

use nalgebra::{DMatrix, DVector};

use super::SolverError;

/// Rows whose multiplier exceeds this value are reported as active.
pub const ACTIVITY_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Symmetric positive definite cost matrix `Q`.
    pub cost: DMatrix<f64>,
    /// Linear cost `q`.
    pub linear: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        cost: DMatrix<f64>,
        linear: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, SolverError> {
        let problem = Self {
            cost,
            linear,
            a_in,
            b_in,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn unconstrained(cost: DMatrix<f64>, linear: DVector<f64>) -> Result<Self, SolverError> {
        let n = linear.len();
        Self::new(cost, linear, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn rows(&self) -> usize {
        self.a_in.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.cost * x)) + self.linear.dot(x)
    }

    fn validate(&self) -> Result<(), SolverError> {
        let n = self.linear.len();
        if self.cost.nrows() != n || self.cost.ncols() != n {
            return Err(SolverError::Dimension(format!(
                "cost is {}x{}, expected {n}x{n}",
                self.cost.nrows(),
                self.cost.ncols()
            )));
        }
        if self.a_in.ncols() != n {
            return Err(SolverError::Dimension(format!(
                "constraint matrix has {} columns, expected {n}",
                self.a_in.ncols()
            )));
        }
        if self.a_in.nrows() != self.b_in.len() {
            return Err(SolverError::Dimension(format!(
                "constraint matrix has {} rows but rhs has {} entries",
                self.a_in.nrows(),
                self.b_in.len()
            )));
        }
        Ok(())
    }

    /// Largest violation `max(aᵢx − bᵢ, 0)` over all rows.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.rows())
            .map(|i| self.a_in.row(i).dot(&x.transpose()) - self.b_in[i])
            .fold(0.0, f64::max)
    }

    /// KKT residuals `(stationarity, primal violation, complementarity)` of
    /// a candidate primal/dual pair.
    pub fn kkt_residuals(&self, x: &DVector<f64>, duals: &DVector<f64>) -> (f64, f64, f64) {
        let stationarity =
            (&self.cost * x + &self.linear + self.a_in.transpose() * duals).norm();
        let primal = self.max_violation(x);
        let complementarity = (0..self.rows())
            .map(|i| (duals[i] * (self.b_in[i] - self.a_in.row(i).dot(&x.transpose()))).abs())
            .fold(0.0, f64::max);
        (stationarity, primal, complementarity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub max_iterations: usize,
    /// Absolute violation tolerance, scaled by `max(1, |bᵢ|)` per row.
    pub feasibility_tol: f64,
    pub activity_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            feasibility_tol: 1e-10,
            activity_tol: ACTIVITY_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    /// One nonnegative multiplier per inequality row.
    pub duals: DVector<f64>,
    /// Rows with multiplier above the activity tolerance, ascending.
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution, SolverError> {
    solve_qp_with(problem, &QpSettings::default())
}

fn row_slack(problem: &QpProblem, i: usize, x: &DVector<f64>) -> f64 {
    problem.b_in[i] - problem.a_in.row(i).dot(&x.transpose())
}

fn row_tol(problem: &QpProblem, settings: &QpSettings, i: usize) -> f64 {
    settings.feasibility_tol * problem.b_in[i].abs().max(1.0)
}

/// Solves the saddle-point system
/// `[G Nᵀ; N 0] [p; y] = [rhs_top; rhs_bottom]` where `N` stacks the
/// given rows of `A`.
fn solve_kkt(
    cost: &DMatrix<f64>,
    a: &DMatrix<f64>,
    rows: &[usize],
    rhs_top: &DVector<f64>,
    rhs_bottom: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = cost.nrows();
    let k = rows.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(cost);
    for (c, &r) in rows.iter().enumerate() {
        for j in 0..n {
            kkt[(j, n + c)] = a[(r, j)];
            kkt[(n + c, j)] = a[(r, j)];
        }
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(rhs_top);
    rhs.rows_mut(n, k).copy_from(rhs_bottom);
    let sol = kkt.full_piv_lu().solve(&rhs)?;
    Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

fn finish(
    problem: &QpProblem,
    settings: &QpSettings,
    status: QpStatus,
    x: DVector<f64>,
    active: &[usize],
    multipliers: &[f64],
    iterations: usize,
) -> QpSolution {
    let mut duals = DVector::zeros(problem.rows());
    for (&row, &u) in active.iter().zip(multipliers) {
        duals[row] = u.max(0.0);
    }
    let active_set = (0..problem.rows())
        .filter(|&i| duals[i] > settings.activity_tol)
        .collect();
    QpSolution {
        status,
        x,
        duals,
        active_set,
        iterations,
    }
}

/// Re-solves the equality-constrained problem on the final working set.
/// Accepted only when it keeps dual feasibility and does not increase the
/// primal violation.
fn polish(
    problem: &QpProblem,
    x: &DVector<f64>,
    active: &[usize],
    multipliers: &[f64],
) -> Option<(DVector<f64>, Vec<f64>)> {
    if active.is_empty() {
        return None;
    }
    let rhs_bottom = DVector::from_iterator(active.len(), active.iter().map(|&r| problem.b_in[r]));
    let (xp, y) = solve_kkt(&problem.cost, &problem.a_in, active, &(-&problem.linear), &rhs_bottom)?;
    if y.iter().any(|v| *v < -1e-12 || !v.is_finite()) || xp.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let old = problem.kkt_residuals(x, &expand(problem.rows(), active, multipliers));
    let new_y: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let new = problem.kkt_residuals(&xp, &expand(problem.rows(), active, &new_y));
    if new.1 <= old.1.max(1e-12) && new.0 <= old.0.max(1e-12) {
        Some((xp, new_y))
    } else {
        None
    }
}

fn expand(rows: usize, active: &[usize], multipliers: &[f64]) -> DVector<f64> {
    let mut d = DVector::zeros(rows);
    for (&r, &u) in active.iter().zip(multipliers) {
        d[r] = u.max(0.0);
    }
    d
}

/// Goldfarb–Idnani dual active-set method.
pub fn solve_qp_with(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, SolverError> {
    problem.validate()?;
    let n = problem.dim();
    let chol = problem
        .cost
        .clone()
        .cholesky()
        .ok_or(SolverError::NotPositiveDefinite)?;

    let mut x = -chol.solve(&problem.linear);
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let mut iterations = 0;

    loop {
        // Most violated row, lowest index on ties.
        let mut candidate: Option<(usize, f64)> = None;
        for i in 0..problem.rows() {
            if active.contains(&i) {
                continue;
            }
            let s = row_slack(problem, i, &x);
            if s < -row_tol(problem, settings, i) && candidate.map_or(true, |(_, best)| s < best) {
                candidate = Some((i, s));
            }
        }
        let Some((p, _)) = candidate else {
            if let Some((xp, yp)) = polish(problem, &x, &active, &mult) {
                x = xp;
                mult = yp;
            }
            return Ok(finish(
                problem,
                settings,
                QpStatus::Optimal,
                x,
                &active,
                &mult,
                iterations,
            ));
        };

        // GI works with rows nᵀx ≥ b̃ where n = −a.
        let normal: DVector<f64> = -problem.a_in.row(p).transpose();
        let ginv_n = chol.solve(&normal);
        let scale = normal.dot(&ginv_n).max(f64::MIN_POSITIVE);
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > settings.max_iterations {
                return Ok(finish(
                    problem,
                    settings,
                    QpStatus::MaxIterations,
                    x,
                    &active,
                    &mult,
                    iterations,
                ));
            }

            // Primal direction z and dual direction r from
            // [G −Nᵀ…] with active normals n_j = −a_j.
            let (z, r) = if active.is_empty() {
                (ginv_n.clone(), DVector::zeros(0))
            } else {
                let (z, y) = solve_kkt(
                    &problem.cost,
                    &problem.a_in,
                    &active,
                    &normal,
                    &DVector::zeros(active.len()),
                )
                .ok_or(SolverError::NotPositiveDefinite)?;
                // Active columns were stored as +a_j, so r = −y.
                (z, -y)
            };

            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 0.0 {
                    let t = mult[k] / rk;
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }

            let zn = z.dot(&normal);
            let slack = row_slack(problem, p, &x);
            let t2 = if zn > 1e-12 * scale {
                (-slack).max(0.0) / zn
            } else {
                f64::INFINITY
            };

            if t1.is_infinite() && t2.is_infinite() {
                return Ok(finish(
                    problem,
                    settings,
                    QpStatus::Infeasible,
                    x,
                    &active,
                    &mult,
                    iterations,
                ));
            }

            if t2.is_infinite() {
                for (k, rk) in r.iter().enumerate() {
                    mult[k] -= t1 * rk;
                }
                u_p += t1;
                let k = drop.expect("finite partial step has a blocking multiplier");
                active.remove(k);
                mult.remove(k);
                continue;
            }

            let t = t1.min(t2);
            x += &z * t;
            for (k, rk) in r.iter().enumerate() {
                mult[k] -= t * rk;
            }
            u_p += t;

            if t2 <= t1 {
                active.push(p);
                mult.push(u_p);
                break;
            }
            let k = drop.expect("partial step has a blocking multiplier");
            active.remove(k);
            mult.remove(k);
        }
        debug_assert!(active.len() <= n);
    }
}

/// Primal active-set method started from a feasible `x0`.
pub fn solve_qp_from(
    problem: &QpProblem,
    x0: &DVector<f64>,
    settings: &QpSettings,
) -> Result<QpSolution, SolverError> {
    problem.validate()?;
    let n = problem.dim();
    if x0.len() != n {
        return Err(SolverError::Dimension(format!(
            "starting point has {} entries, expected {n}",
            x0.len()
        )));
    }
    if problem.cost.clone().cholesky().is_none() {
        return Err(SolverError::NotPositiveDefinite);
    }
    for i in 0..problem.rows() {
        let s = row_slack(problem, i, x0);
        if s < -1e3 * row_tol(problem, settings, i) {
            return Err(SolverError::InfeasibleStart {
                row: i,
                violation: -s,
            });
        }
    }

    let mut x = x0.clone();
    let mut working: Vec<usize> = Vec::new();
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;
        let grad = &problem.cost * &x + &problem.linear;
        let (step, lambda) = solve_kkt(
            &problem.cost,
            &problem.a_in,
            &working,
            &(-&grad),
            &DVector::zeros(working.len()),
        )
        .ok_or(SolverError::NotPositiveDefinite)?;

        let stalled =
            working.len() >= n || step.amax() <= 1e-13 * (1.0 + x.amax());
        if stalled {
            let (idx, min_lambda) = lambda
                .iter()
                .enumerate()
                .fold((usize::MAX, f64::INFINITY), |acc, (k, &l)| {
                    if l < acc.1 {
                        (k, l)
                    } else {
                        acc
                    }
                });
            if working.is_empty() || min_lambda >= -1e-12 {
                let mut mult: Vec<f64> = lambda.iter().copied().collect();
                if let Some((xp, yp)) = polish(problem, &x, &working, &mult) {
                    if problem.max_violation(&xp) <= problem.max_violation(&x).max(1e-12) {
                        x = xp;
                        mult = yp;
                    }
                }
                return Ok(finish(
                    problem,
                    settings,
                    QpStatus::Optimal,
                    x,
                    &working,
                    &mult,
                    iterations,
                ));
            }
            working.remove(idx);
            continue;
        }

        let step_norm = step.norm();
        let mut alpha = 1.0;
        let mut blocking: Option<usize> = None;
        for i in 0..problem.rows() {
            if working.contains(&i) {
                continue;
            }
            let row = problem.a_in.row(i);
            let ap = row.dot(&step.transpose());
            if ap > 1e-14 * row.norm() * step_norm {
                let t = (row_slack(problem, i, &x) / ap).max(0.0);
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        x += &step * alpha;
        if let Some(i) = blocking {
            working.push(i);
        }
    }

    let mult = vec![0.0; working.len()];
    Ok(finish(
        problem,
        settings,
        QpStatus::MaxIterations,
        x,
        &working,
        &mult,
        iterations,
    ))
}
