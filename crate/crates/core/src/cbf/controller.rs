use super::{assemble_polytope, BarrierSpec, CbfError};
use crate::dynamics::DynamicsModel;
use crate::solvers::{solve_qp, EllipsoidResult, QpProblem, QpStatus};
use crate::volume::{chebyshev_proxy, ellipsoid_proxy_with, HPolytope, InputBox, VolumeMethod, VolumeResult};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsCbfParams {
    /// Linear class-K gain on the volume proxy.
    pub alpha_v: f64,
    /// Weight `M` of the slack penalty `M δ²`.
    pub slack_weight: f64,
    /// Proxy values below this count as zero volume.
    pub epsilon: f64,
    pub volume_method: VolumeMethod,
    /// Forward-difference step in time for `∂V/∂t`.
    pub time_fd_step: f64,
    /// Central-difference step per state coordinate for `∂V/∂x`.
    pub state_fd_step: f64,
}

impl Default for FsCbfParams {
    fn default() -> Self {
        Self {
            alpha_v: 1.0,
            slack_weight: 1e3,
            epsilon: 1e-3,
            volume_method: VolumeMethod::Ellipsoid,
            time_fd_step: 1e-3,
            state_fd_step: 1e-5,
        }
    }
}

impl FsCbfParams {
    pub fn validate(&self) -> Result<(), CbfError> {
        let err = |m: &str| Err(CbfError::Params(m.into()));
        if !(self.alpha_v > 0.0) {
            return err("alpha_v must be positive");
        }
        if !(self.slack_weight >= 1.0) {
            return err("slack_weight must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return err("epsilon must be positive");
        }
        if !(self.time_fd_step > 0.0) || !(self.state_fd_step > 0.0) {
            return err("finite-difference steps must be positive");
        }
        if !matches!(self.volume_method, VolumeMethod::Chebyshev | VolumeMethod::Ellipsoid) {
            return err("volume_method must be chebyshev or ellipsoid");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStatus {
    Ok,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub u: DVector<f64>,
    /// Slack on the volume row; `None` for the plain CBF-QP or when the
    /// row was dropped.
    pub delta: Option<f64>,
    pub status: ControlStatus,
    pub qp_status: QpStatus,
    pub volume: Option<VolumeResult>,
    /// Polytope rows with a positive multiplier.
    pub active_rows: Vec<usize>,
    /// `min (bᵢ − aᵢ·u)/‖aᵢ‖` over barrier rows; infinite without any.
    pub boundary_margin: f64,
    /// The volume was below the floor and only the barrier rows were
    /// enforced.
    pub fs_row_dropped: bool,
}

impl ControlDecision {
    fn infeasible(u_ref: &DVector<f64>, p: &HPolytope, qp_status: QpStatus) -> Self {
        let u = p.input_box().map(|b| b.saturate(u_ref)).unwrap_or_else(|| u_ref.clone());
        Self {
            u,
            delta: None,
            status: ControlStatus::Infeasible,
            qp_status,
            volume: None,
            active_rows: Vec::new(),
            boundary_margin: f64::NEG_INFINITY,
            fs_row_dropped: false,
        }
    }
}

/// Smallest normalized slack of `u` over the barrier rows.
pub fn boundary_margin(p: &HPolytope, u: &DVector<f64>) -> f64 {
    p.cbf_rows()
        .filter_map(|i| {
            let norm = p.a().row(i).norm();
            (norm > 1e-12).then(|| p.slack(i, u) / norm)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Closest control to `u_ref` inside the polytope.
pub fn cbf_qp_control(u_ref: &DVector<f64>, p: &HPolytope) -> Result<ControlDecision, CbfError> {
    let m = p.dim();
    if u_ref.len() != m {
        return Err(CbfError::Dimension(format!("u_ref has {} entries, polytope {m}", u_ref.len())));
    }
    if p.is_trivially_empty() {
        return Ok(ControlDecision::infeasible(u_ref, p, QpStatus::Infeasible));
    }
    let qp = QpProblem::new(DMatrix::identity(m, m) * 2.0, -u_ref * 2.0, p.a().clone(), p.b().clone())?;
    let sol = solve_qp(&qp)?;
    if sol.status != QpStatus::Optimal {
        return Ok(ControlDecision::infeasible(u_ref, p, sol.status));
    }
    Ok(ControlDecision {
        boundary_margin: boundary_margin(p, &sol.x),
        u: sol.x,
        delta: None,
        status: ControlStatus::Ok,
        qp_status: sol.status,
        volume: None,
        active_rows: sol.active_set,
        fs_row_dropped: false,
    })
}

fn proxy(
    p: &HPolytope,
    params: &FsCbfParams,
    warm: Option<&EllipsoidResult>,
) -> Result<VolumeResult, CbfError> {
    let mut r = match params.volume_method {
        VolumeMethod::Chebyshev => chebyshev_proxy(p)?,
        VolumeMethod::Ellipsoid => ellipsoid_proxy_with(p, warm)?,
        other => return Err(CbfError::Params(format!("{other} is not a differentiable proxy"))),
    };
    if r.value < params.epsilon {
        r.value = 0.0;
        r.degenerate = true;
    }
    Ok(r)
}

/// Proxy volume of the feasible polytope at `(t, x)`.
pub fn volume_of_state(
    specs: &[BarrierSpec],
    bounds: &InputBox,
    model: &dyn DynamicsModel,
    params: &FsCbfParams,
    t: f64,
    x: &DVector<f64>,
) -> Result<VolumeResult, CbfError> {
    params.validate()?;
    proxy(&assemble_polytope(specs, bounds, model, t, x)?, params, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGradients {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub dv_dt: f64,
    pub volume: VolumeResult,
}

/// Chain rule `∂V/∂A · ∂A/∂x + ∂V/∂b · ∂b/∂x`, with the polytope data
/// differentiated numerically. Time uses a forward difference.
fn chain_rule(
    specs: &[BarrierSpec],
    bounds: &InputBox,
    model: &dyn DynamicsModel,
    params: &FsCbfParams,
    t: f64,
    x: &DVector<f64>,
    p: &HPolytope,
    vol: &VolumeResult,
) -> Result<(DVector<f64>, f64), CbfError> {
    let (ga, gb) = match (&vol.grad_a, &vol.grad_b) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(CbfError::DegenerateVolume { value: vol.value }),
    };
    let contract = |pa: &HPolytope, pb: &HPolytope| -> f64 {
        ga.component_mul(&(pa.a() - pb.a())).sum() + gb.dot(&(pa.b() - pb.b()))
    };
    let h = params.state_fd_step;
    let mut grad_x = DVector::zeros(x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        xp[k] += h;
        let mut xm = x.clone();
        xm[k] -= h;
        let pp = assemble_polytope(specs, bounds, model, t, &xp)?;
        let pm = assemble_polytope(specs, bounds, model, t, &xm)?;
        grad_x[k] = contract(&pp, &pm) / (2.0 * h);
    }
    let tau = params.time_fd_step;
    let pt = assemble_polytope(specs, bounds, model, t + tau, x)?;
    Ok((grad_x, contract(&pt, p) / tau))
}

/// `V`, `∂V/∂x` and `∂V/∂t` at `(t, x)`.
pub fn volume_state_time_gradients(
    specs: &[BarrierSpec],
    bounds: &InputBox,
    model: &dyn DynamicsModel,
    params: &FsCbfParams,
    t: f64,
    x: &DVector<f64>,
) -> Result<VolumeGradients, CbfError> {
    params.validate()?;
    let p = assemble_polytope(specs, bounds, model, t, x)?;
    let vol = proxy(&p, params, None)?;
    if vol.degenerate {
        return Err(CbfError::DegenerateVolume { value: vol.value });
    }
    let (grad_x, dv_dt) = chain_rule(specs, bounds, model, params, t, x, &p, &vol)?;
    Ok(VolumeGradients {
        value: vol.value,
        grad_x,
        dv_dt,
        volume: vol,
    })
}

/// FS-CBF-QP session. Keeps the last inscribed ellipsoid as a warm start,
/// so one instance belongs to one trajectory.
#[derive(Debug, Clone)]
pub struct FsCbfController {
    params: FsCbfParams,
    warm: Option<EllipsoidResult>,
}

impl FsCbfController {
    pub fn new(params: FsCbfParams) -> Result<Self, CbfError> {
        params.validate()?;
        Ok(Self { params, warm: None })
    }

    pub fn params(&self) -> &FsCbfParams {
        &self.params
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Solve `min ‖u − u_ref‖² + M δ²` subject to the polytope rows and
    /// `∇V·(f + g u) + ∂V/∂t + α_V V ≥ δ`.
    pub fn control(
        &mut self,
        u_ref: &DVector<f64>,
        specs: &[BarrierSpec],
        bounds: &InputBox,
        model: &dyn DynamicsModel,
        t: f64,
        x: &DVector<f64>,
    ) -> Result<ControlDecision, CbfError> {
        let p = assemble_polytope(specs, bounds, model, t, x)?;
        self.control_on(u_ref, &p, specs, bounds, model, t, x)
    }

    /// Same as [`control`](Self::control) with the polytope at `(t, x)`
    /// already assembled.
    #[allow(clippy::too_many_arguments)]
    pub fn control_on(
        &mut self,
        u_ref: &DVector<f64>,
        p: &HPolytope,
        specs: &[BarrierSpec],
        bounds: &InputBox,
        model: &dyn DynamicsModel,
        t: f64,
        x: &DVector<f64>,
    ) -> Result<ControlDecision, CbfError> {
        let m = p.dim();
        if u_ref.len() != m {
            return Err(CbfError::Dimension(format!("u_ref has {} entries, polytope {m}", u_ref.len())));
        }
        if p.is_trivially_empty() {
            return Ok(ControlDecision::infeasible(u_ref, p, QpStatus::Infeasible));
        }
        let vol = proxy(p, &self.params, self.warm.as_ref())?;
        if let Some(e) = &vol.ellipsoid {
            self.warm = Some(e.clone());
        }
        if vol.degenerate {
            self.warm = None;
            let mut d = cbf_qp_control(u_ref, p)?;
            d.fs_row_dropped = true;
            d.volume = Some(vol);
            return Ok(d);
        }
        let (grad_x, dv_dt) = chain_rule(specs, bounds, model, &self.params, t, x, p, &vol)?;

        let f = model.drift(x);
        let g = model.input_matrix(x);
        let lg = g.tr_mul(&grad_x);
        let rows = p.rows();
        let mut a_in = DMatrix::zeros(rows + 1, m + 1);
        a_in.view_mut((0, 0), (rows, m)).copy_from(p.a());
        for j in 0..m {
            a_in[(rows, j)] = -lg[j];
        }
        a_in[(rows, m)] = 1.0;
        let mut b_in = DVector::zeros(rows + 1);
        b_in.rows_mut(0, rows).copy_from(p.b());
        b_in[rows] = grad_x.dot(&f) + dv_dt + self.params.alpha_v * vol.value;

        let mut cost = DMatrix::identity(m + 1, m + 1) * 2.0;
        cost[(m, m)] = 2.0 * self.params.slack_weight;
        let mut linear = DVector::zeros(m + 1);
        linear.rows_mut(0, m).copy_from(&(-u_ref * 2.0));

        let sol = solve_qp(&QpProblem::new(cost, linear, a_in, b_in)?)?;
        if sol.status != QpStatus::Optimal {
            return Ok(ControlDecision::infeasible(u_ref, p, sol.status));
        }
        let u = sol.x.rows(0, m).into_owned();
        Ok(ControlDecision {
            boundary_margin: boundary_margin(p, &u),
            u,
            delta: Some(sol.x[m]),
            status: ControlStatus::Ok,
            qp_status: sol.status,
            volume: Some(vol),
            active_rows: sol.active_set.into_iter().filter(|&i| i < rows).collect(),
            fs_row_dropped: false,
        })
    }
}

/// One-shot FS-CBF-QP without warm starting.
pub fn fs_cbf_qp_control(
    u_ref: &DVector<f64>,
    specs: &[BarrierSpec],
    bounds: &InputBox,
    model: &dyn DynamicsModel,
    params: &FsCbfParams,
    t: f64,
    x: &DVector<f64>,
) -> Result<ControlDecision, CbfError> {
    FsCbfController::new(params.clone())?.control(u_ref, specs, bounds, model, t, x)
}
