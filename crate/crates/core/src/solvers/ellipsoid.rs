//! Maximum-volume inscribed ellipsoid `{B z + d : ‖z‖ ≤ 1}` of a polytope
//! `{u : A u ≤ b}`:
//!
//! ```text
//!   minimize   −log det B
//!   subject to ‖B aᵢ‖ + aᵢ·d ≤ bᵢ
//! ```
//!
//! Solved with a barrier method on the second-order-cone form, using
//! `−log(sᵢ² − ‖B aᵢ‖²)` with `sᵢ = bᵢ − aᵢ·d` as the barrier for each row.
//! `B` is parametrized by its upper triangle.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::chebyshev::solve_chebyshev;
use super::SolverError;

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidResult {
    /// Symmetric positive definite shape matrix.
    pub shape: DMatrix<f64>,
    pub center: DVector<f64>,
    pub log_det: f64,
    /// Multiplier per input row (zero for dropped all-zero rows).
    /// Equals `∂ log det B / ∂bᵢ` at the solution.
    pub duals: DVector<f64>,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidSettings {
    /// Total Newton step budget across all barrier stages.
    pub max_newton_steps: usize,
    /// Stop once the barrier duality gap `2N/t` drops below this.
    pub gap_tolerance: f64,
    /// Barrier parameter growth per stage.
    pub barrier_growth: f64,
    /// Chebyshev radius at or below which the polytope counts as degenerate.
    pub degenerate_radius: f64,
    /// Previous solution used as the starting point when still strictly
    /// feasible (shrunk slightly toward its center).
    pub warm_start: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl Default for EllipsoidSettings {
    fn default() -> Self {
        Self {
            max_newton_steps: 100,
            gap_tolerance: 1e-9,
            barrier_growth: 40.0,
            degenerate_radius: 1e-9,
            warm_start: None,
        }
    }
}

pub fn solve_max_ellipsoid(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<EllipsoidResult, SolverError> {
    solve_max_ellipsoid_with(a, b, &EllipsoidSettings::default())
}

struct Layout {
    m: usize,
    pairs: Vec<(usize, usize)>,
}

impl Layout {
    fn new(m: usize) -> Self {
        let mut pairs = Vec::with_capacity(m * (m + 1) / 2);
        for p in 0..m {
            for q in p..m {
                pairs.push((p, q));
            }
        }
        Self { m, pairs }
    }

    fn n_shape(&self) -> usize {
        self.pairs.len()
    }

    fn dim(&self) -> usize {
        self.pairs.len() + self.m
    }

    fn pack(&self, shape: &DMatrix<f64>, center: &DVector<f64>) -> DVector<f64> {
        let mut theta = DVector::zeros(self.dim());
        for (k, &(p, q)) in self.pairs.iter().enumerate() {
            theta[k] = shape[(p, q)];
        }
        theta.rows_mut(self.n_shape(), self.m).copy_from(center);
        theta
    }

    fn unpack(&self, theta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut shape = DMatrix::zeros(self.m, self.m);
        for (k, &(p, q)) in self.pairs.iter().enumerate() {
            shape[(p, q)] = theta[k];
            shape[(q, p)] = theta[k];
        }
        (shape, theta.rows(self.n_shape(), self.m).into_owned())
    }
}

struct Rows<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    kept: Vec<usize>,
}

impl Rows<'_> {
    /// Slack `sᵢ` and `wᵢ = B aᵢ` for every kept row, or `None` when the
    /// point is outside the barrier domain.
    fn margins(&self, shape: &DMatrix<f64>, center: &DVector<f64>) -> Option<Vec<(f64, DVector<f64>, f64)>> {
        let mut out = Vec::with_capacity(self.kept.len());
        for &i in &self.kept {
            let ai = self.a.row(i).transpose();
            let s = self.b[i] - ai.dot(center);
            let w = shape * &ai;
            let g = s * s - w.norm_squared();
            if !(s > 0.0 && g > 0.0) {
                return None;
            }
            out.push((s, w, g));
        }
        Some(out)
    }
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0
}

/// Barrier objective `t·(−log det B) − Σ log gᵢ`.
fn barrier_value(layout: &Layout, rows: &Rows, theta: &DVector<f64>, t: f64) -> Option<f64> {
    let (shape, center) = layout.unpack(theta);
    let chol = shape.clone().cholesky()?;
    let margins = rows.margins(&shape, &center)?;
    let mut value = -t * log_det(&chol);
    for (_, _, g) in margins {
        value -= g.ln();
    }
    Some(value)
}

fn barrier_derivatives(
    layout: &Layout,
    rows: &Rows,
    theta: &DVector<f64>,
    t: f64,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let m = layout.m;
    let ns = layout.n_shape();
    let dim = layout.dim();
    let (shape, center) = layout.unpack(theta);
    let chol = shape.clone().cholesky()?;
    let inv = chol.inverse();
    let margins = rows.margins(&shape, &center)?;

    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(dim, dim);

    // −log det B
    for (k, &(p, q)) in layout.pairs.iter().enumerate() {
        let mult = if p == q { 1.0 } else { 2.0 };
        grad[k] -= t * mult * inv[(p, q)];
    }
    // Hessian entries tr(B⁻¹ E_k B⁻¹ E_l) with E the symmetric basis.
    for (k, &(p, q)) in layout.pairs.iter().enumerate() {
        for (l, &(r, s)) in layout.pairs.iter().enumerate().skip(k) {
            let mut v = inv[(q, r)] * inv[(s, p)];
            if r != s {
                v += inv[(q, s)] * inv[(r, p)];
            }
            if p != q {
                v += inv[(p, r)] * inv[(s, q)];
                if r != s {
                    v += inv[(p, s)] * inv[(r, q)];
                }
            }
            hess[(k, l)] += t * v;
            if l != k {
                hess[(l, k)] += t * v;
            }
        }
    }

    for (&i, (s, w, g)) in rows.kept.iter().zip(margins) {
        let ai = rows.a.row(i);
        // Jacobian of wᵢ = B aᵢ with respect to θ (m × dim).
        let mut jw = DMatrix::zeros(m, dim);
        for (k, &(p, q)) in layout.pairs.iter().enumerate() {
            jw[(p, k)] += ai[q];
            if p != q {
                jw[(q, k)] += ai[p];
            }
        }
        let mut ds = DVector::zeros(dim);
        for j in 0..m {
            ds[ns + j] = -ai[j];
        }
        let dg = &ds * (2.0 * s) - jw.transpose() * &w * 2.0;
        let d2g = &ds * ds.transpose() * 2.0 - jw.transpose() * &jw * 2.0;
        grad -= &dg / g;
        hess += &dg * dg.transpose() / (g * g) - d2g / g;
    }
    Some((grad, hess))
}

pub fn solve_max_ellipsoid_with(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    settings: &EllipsoidSettings,
) -> Result<EllipsoidResult, SolverError> {
    let m = a.ncols();
    if a.nrows() != b.len() || m == 0 {
        return Err(SolverError::Dimension(format!(
            "A is {}x{}, b has {} entries",
            a.nrows(),
            m,
            b.len()
        )));
    }
    let layout = Layout::new(m);
    let kept: Vec<usize> = (0..a.nrows()).filter(|&i| a.row(i).norm() > 0.0).collect();
    if let Some(i) = (0..a.nrows()).find(|&i| a.row(i).norm() == 0.0 && b[i] < 0.0) {
        return Err(SolverError::DegeneratePolytope { radius: b[i] });
    }
    let rows = Rows { a, b, kept };

    let warm = settings.warm_start.as_ref().and_then(|(shape, center)| {
        if shape.nrows() != m || center.len() != m {
            return None;
        }
        let shrunk = shape * 0.95;
        rows.margins(&shrunk, center)?;
        shrunk.clone().cholesky()?;
        Some(layout.pack(&shrunk, center))
    });
    let mut theta = match warm {
        Some(theta) => theta,
        None => {
            let cheb = solve_chebyshev(a, b)?;
            if cheb.radius <= settings.degenerate_radius {
                return Err(SolverError::DegeneratePolytope {
                    radius: cheb.radius,
                });
            }
            let shape = DMatrix::identity(m, m) * (0.5 * cheb.radius);
            layout.pack(&shape, &cheb.center)
        }
    };

    let n_rows = rows.kept.len().max(1) as f64;
    let mut t = 1.0;
    let mut steps = 0;
    loop {
        // Centering: damped Newton far from the center, pure Newton once the
        // decrement is small (function values are useless there because the
        // barrier grows like t and roundoff swamps the Armijo test).
        let mut previous = f64::INFINITY;
        loop {
            let (grad, hess) = barrier_derivatives(&layout, &rows, &theta, t)
                .ok_or(SolverError::NotConverged { iterations: steps })?;
            let delta = match hess.clone().cholesky() {
                Some(chol) => -chol.solve(&grad),
                None => -hess
                    .full_piv_lu()
                    .solve(&grad)
                    .ok_or(SolverError::NotConverged { iterations: steps })?,
            };
            let decrement = -grad.dot(&delta);
            if !(decrement > 1e-24) {
                break;
            }
            let local = decrement < 0.05;
            if local && decrement > 0.25 * previous {
                // Quadratic convergence has stalled at machine precision.
                break;
            }
            previous = decrement;
            steps += 1;
            if steps > settings.max_newton_steps {
                return Err(SolverError::NotConverged { iterations: steps });
            }
            if local {
                let trial = &theta + &delta;
                if barrier_value(&layout, &rows, &trial, t).is_some() {
                    theta = trial;
                    continue;
                }
            }
            let f0 = barrier_value(&layout, &rows, &theta, t)
                .ok_or(SolverError::NotConverged { iterations: steps })?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &theta + &delta * alpha;
                if let Some(f) = barrier_value(&layout, &rows, &trial, t) {
                    if f <= f0 - 0.25 * alpha * decrement {
                        theta = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if 2.0 * n_rows / t <= settings.gap_tolerance {
            break;
        }
        t *= settings.barrier_growth;
    }

    let (shape, center) = layout.unpack(&theta);
    let chol = shape
        .clone()
        .cholesky()
        .ok_or(SolverError::NotConverged { iterations: steps })?;
    let margins = rows
        .margins(&shape, &center)
        .ok_or(SolverError::NotConverged { iterations: steps })?;
    let mut duals = DVector::zeros(a.nrows());
    for (&i, (s, _, g)) in rows.kept.iter().zip(margins) {
        duals[i] = 2.0 * s / (t * g);
    }
    Ok(EllipsoidResult {
        log_det: log_det(&chol),
        shape,
        center,
        duals,
        newton_steps: steps,
    })
}
