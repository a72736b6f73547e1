use nalgebra::{DMatrix, DVector};

use super::{HPolytope, VolumeError, VolumeMethod, VolumeResult};
use crate::solvers::{
    solve_chebyshev, solve_max_ellipsoid_with, EllipsoidResult, EllipsoidSettings, SolverError,
    ACTIVITY_TOLERANCE,
};

/// Chebyshev radius at or below which a polytope is treated as having no
/// interior.
pub const DEGENERACY_FLOOR: f64 = 1e-9;

/// True when the polytope has no interior (empty or measure zero).
pub fn is_empty(p: &HPolytope) -> bool {
    if p.is_trivially_empty() {
        return true;
    }
    match solve_chebyshev(p.a(), p.b()) {
        Ok(c) => c.radius <= DEGENERACY_FLOOR,
        Err(_) => false,
    }
}

fn zero_gradients(p: &HPolytope, mut r: VolumeResult) -> VolumeResult {
    r.grad_a = Some(DMatrix::zeros(p.rows(), p.dim()));
    r.grad_b = Some(DVector::zeros(p.rows()));
    r
}

/// Largest inscribed ball radius with `∂r/∂bᵢ = λᵢ` and
/// `∂r/∂aᵢ = −λᵢ (c + r aᵢ/‖aᵢ‖)`.
pub fn chebyshev_proxy(p: &HPolytope) -> Result<VolumeResult, VolumeError> {
    if p.is_trivially_empty() {
        return Ok(zero_gradients(p, VolumeResult::empty(VolumeMethod::Chebyshev)));
    }
    let ball = solve_chebyshev(p.a(), p.b())?;
    if ball.radius <= DEGENERACY_FLOOR {
        return Ok(zero_gradients(p, VolumeResult::empty(VolumeMethod::Chebyshev)));
    }
    let m = p.dim();
    let mut grad_a = DMatrix::zeros(p.rows(), m);
    for i in 0..p.rows() {
        let lambda = ball.duals[i];
        if lambda == 0.0 {
            continue;
        }
        let row = p.a().row(i);
        let norm = row.norm();
        for j in 0..m {
            grad_a[(i, j)] = -lambda * (ball.center[j] + ball.radius * row[j] / norm);
        }
    }
    // Weakly active rows (touching the ball without a multiplier) or more
    // than m+1 active rows mean the radius has a kink here.
    let touching = (0..p.rows())
        .filter(|&i| {
            let norm = p.a().row(i).norm();
            norm > 0.0
                && (p.slack(i, &ball.center) - norm * ball.radius).abs() <= 1e-9 * (1.0 + p.b()[i].abs())
        })
        .count();
    let nonsmooth = ball.active_set.len() != m + 1 || touching != ball.active_set.len();
    Ok(VolumeResult {
        value: ball.radius,
        grad_a: Some(grad_a),
        grad_b: Some(ball.duals.clone()),
        method: VolumeMethod::Chebyshev,
        degenerate: false,
        std_error: None,
        active_set: ball.active_set,
        nonsmooth,
        not_converged: false,
        ellipsoid: None,
    })
}

pub fn ellipsoid_proxy(p: &HPolytope) -> Result<VolumeResult, VolumeError> {
    ellipsoid_proxy_with(p, None)
}

/// `det B` of the maximum-volume inscribed ellipsoid, optionally warm
/// started. With `L = log det B`, `s = bᵢ − aᵢ·d`:
/// `∂L/∂bᵢ = λᵢ` and `∂L/∂aᵢ = −λᵢ (d + B² aᵢ / sᵢ)`.
///
/// Degenerate polytopes return the Chebyshev result (value 0). When the
/// ellipsoid solver fails to converge, `rᵐ` from the Chebyshev ball stands
/// in and `not_converged` is set.
pub fn ellipsoid_proxy_with(
    p: &HPolytope,
    warm: Option<&EllipsoidResult>,
) -> Result<VolumeResult, VolumeError> {
    if p.is_trivially_empty() {
        return Ok(zero_gradients(p, VolumeResult::empty(VolumeMethod::Ellipsoid)));
    }
    let settings = EllipsoidSettings {
        warm_start: warm.map(|w| (w.shape.clone(), w.center.clone())),
        ..EllipsoidSettings::default()
    };
    let ell = match solve_max_ellipsoid_with(p.a(), p.b(), &settings) {
        Ok(e) => e,
        Err(SolverError::DegeneratePolytope { .. }) => {
            let mut r = chebyshev_proxy(p)?;
            r.method = VolumeMethod::Ellipsoid;
            return Ok(r);
        }
        Err(SolverError::NotConverged { .. }) => return chebyshev_fallback(p),
        Err(e) => return Err(e.into()),
    };

    let m = p.dim();
    let value = ell.log_det.exp();
    let shape_sq = &ell.shape * &ell.shape;
    let mut grad_a = DMatrix::zeros(p.rows(), m);
    let mut grad_b = DVector::zeros(p.rows());
    let mut active_set = Vec::new();
    for i in 0..p.rows() {
        let lambda = ell.duals[i];
        if lambda == 0.0 {
            continue;
        }
        if lambda > ACTIVITY_TOLERANCE {
            active_set.push(i);
        }
        let ai = p.a().row(i).transpose();
        let s = p.b()[i] - ai.dot(&ell.center);
        let g = -(&ell.center + &shape_sq * &ai / s) * lambda;
        for j in 0..m {
            grad_a[(i, j)] = value * g[j];
        }
        grad_b[i] = value * lambda;
    }
    Ok(VolumeResult {
        value,
        grad_a: Some(grad_a),
        grad_b: Some(grad_b),
        method: VolumeMethod::Ellipsoid,
        degenerate: false,
        std_error: None,
        active_set,
        nonsmooth: false,
        not_converged: false,
        ellipsoid: Some(ell),
    })
}

fn chebyshev_fallback(p: &HPolytope) -> Result<VolumeResult, VolumeError> {
    let mut r = chebyshev_proxy(p)?;
    let m = p.dim() as i32;
    let radius = r.value;
    let scale = if m > 1 { m as f64 * radius.powi(m - 1) } else { 1.0 };
    r.value = radius.powi(m);
    r.grad_a = r.grad_a.map(|g| g * scale);
    r.grad_b = r.grad_b.map(|g| g * scale);
    r.method = VolumeMethod::Ellipsoid;
    r.not_converged = true;
    Ok(r)
}

/// Value and active set of a proxy.
pub fn proxy_value(p: &HPolytope, method: VolumeMethod) -> Result<(f64, Vec<usize>), VolumeError> {
    let r = match method {
        VolumeMethod::Chebyshev => chebyshev_proxy(p)?,
        VolumeMethod::Ellipsoid => ellipsoid_proxy(p)?,
        other => {
            return Err(VolumeError::Config(format!(
                "{other} has no differentiable proxy"
            )))
        }
    };
    Ok((r.value, r.active_set))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdGradient {
    pub grad_a: DMatrix<f64>,
    pub grad_b: DVector<f64>,
    /// Entries whose ± evaluations saw different active sets.
    pub active_set_changes: usize,
}

impl FdGradient {
    pub fn active_set_changed(&self) -> bool {
        self.active_set_changes > 0
    }
}

/// Central finite differences of a proxy with respect to every entry of
/// `A` and `b`.
pub fn proxy_gradient_fd(
    p: &HPolytope,
    method: VolumeMethod,
    step: f64,
) -> Result<FdGradient, VolumeError> {
    if !(step > 0.0) {
        return Err(VolumeError::Config("finite-difference step must be positive".into()));
    }
    let mut changes = 0;
    let mut central = |a_plus: DMatrix<f64>, b_plus: DVector<f64>, a_minus: DMatrix<f64>, b_minus: DVector<f64>| -> Result<f64, VolumeError> {
        let (vp, sp) = proxy_value(&p.with_data(a_plus, b_plus)?, method)?;
        let (vm, sm) = proxy_value(&p.with_data(a_minus, b_minus)?, method)?;
        if sp != sm {
            changes += 1;
        }
        Ok((vp - vm) / (2.0 * step))
    };

    let mut grad_a = DMatrix::zeros(p.rows(), p.dim());
    for i in 0..p.rows() {
        for j in 0..p.dim() {
            let mut ap = p.a().clone();
            ap[(i, j)] += step;
            let mut am = p.a().clone();
            am[(i, j)] -= step;
            grad_a[(i, j)] = central(ap, p.b().clone(), am, p.b().clone())?;
        }
    }
    let mut grad_b = DVector::zeros(p.rows());
    for i in 0..p.rows() {
        let mut bp = p.b().clone();
        bp[i] += step;
        let mut bm = p.b().clone();
        bm[i] -= step;
        grad_b[i] = central(p.a().clone(), bp, p.a().clone(), bm)?;
    }
    Ok(FdGradient {
        grad_a,
        grad_b,
        active_set_changes: changes,
    })
}
