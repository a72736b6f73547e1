use super::{wrap_angle, ModelKind};
use crate::volume::InputBox;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub k_omega: f64,
    /// Position gain (`k_p` in some write-ups).
    #[serde(alias = "k_p")]
    pub k_x: f64,
    pub k_v: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_omega: 2.0,
            k_x: 1.0,
            k_v: 1.5,
        }
    }
}

impl ControllerGains {
    pub fn is_valid(&self) -> bool {
        [self.k_omega, self.k_x, self.k_v].iter().all(|g| *g > 0.0 && g.is_finite())
    }
}

/// Goal tracker for the dynamic unicycle `(px, py, v, ψ)`:
///
/// `ψ_e = wrap(ψ − atan2(g − p))`, `ω = −k_ω ψ_e`,
/// `v_ref = k_x ‖p − g‖ cos ψ_e`, `a = −k_v (v − v_ref)`,
/// saturated to the input box. At the goal the heading error is taken as
/// zero, so only the speed is damped.
pub fn unicycle_reference(
    x: &DVector<f64>,
    goal: [f64; 2],
    gains: &ControllerGains,
    bounds: &InputBox,
) -> DVector<f64> {
    let dx = goal[0] - x[0];
    let dy = goal[1] - x[1];
    let dist = dx.hypot(dy);
    let psi_e = if dist > 1e-12 {
        wrap_angle(x[3] - dy.atan2(dx))
    } else {
        0.0
    };
    let v_ref = gains.k_x * dist * psi_e.cos();
    let a = -gains.k_v * (x[2] - v_ref);
    let omega = -gains.k_omega * psi_e;
    bounds.saturate(&DVector::from_vec(vec![a, omega]))
}

/// Nominal control for any of the scenario models.
pub fn reference_control(
    kind: &ModelKind,
    x: &DVector<f64>,
    goal: [f64; 2],
    gains: &ControllerGains,
    bounds: &InputBox,
) -> DVector<f64> {
    match kind {
        ModelKind::SingleIntegrator => {
            bounds.saturate(&DVector::from_vec(vec![gains.k_x * (goal[0] - x[0]), gains.k_x * (goal[1] - x[1])]))
        }
        ModelKind::Dubins { .. } => {
            let dx = goal[0] - x[0];
            let dy = goal[1] - x[1];
            let err = if dx.hypot(dy) > 1e-12 {
                wrap_angle(x[2] - dy.atan2(dx))
            } else {
                0.0
            };
            bounds.saturate(&DVector::from_vec(vec![-gains.k_omega * err]))
        }
        ModelKind::Unicycle => unicycle_reference(x, goal, gains, bounds),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> InputBox {
        InputBox::symmetric(&[3.0, 3.0]).unwrap()
    }

    #[test]
    fn goal_ahead() {
        let gains = ControllerGains { k_omega: 1.0, k_x: 1.0, k_v: 1.5 };
        let u = unicycle_reference(&DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]), [2.0, 0.0], &gains, &bounds());
        assert!((u[0] - 3.0).abs() < 1e-12);
        assert_eq!(u[1], 0.0);
    }

    #[test]
    fn goal_behind() {
        let gains = ControllerGains { k_omega: 1.0, k_x: 1.0, k_v: 1.0 };
        let u = unicycle_reference(&DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]), [-1.0, 0.0], &gains, &bounds());
        // ψ_e = π: v_ref = −1 so a = −1; ω = −π saturated to −3.
        assert!((u[0] + 1.0).abs() < 1e-12);
        assert_eq!(u[1], -3.0);
    }

    #[test]
    fn equilibrium_only_at_rest_on_goal() {
        let gains = ControllerGains::default();
        let at_goal = unicycle_reference(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.4]), [1.0, 1.0], &gains, &bounds());
        assert!(at_goal.amax() < 1e-9);
        let moving = unicycle_reference(&DVector::from_vec(vec![1.0, 1.0, 0.2, 0.0]), [1.0, 1.0], &gains, &bounds());
        assert!(moving.amax() > 1e-9);
        let away = unicycle_reference(&DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]), [1.0, 1.0], &gains, &bounds());
        assert!(away.amax() > 1e-9);
    }

    #[test]
    fn heading_error_turns_toward_goal() {
        let gains = ControllerGains::default();
        // Facing +x with the goal up and to the left: turn counter-clockwise.
        let u = unicycle_reference(&DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]), [0.0, 5.0], &gains, &bounds());
        assert!(u[1] > 0.0);
    }

    #[test]
    fn single_integrator_points_at_goal() {
        let b = InputBox::symmetric(&[1.0, 1.0]).unwrap();
        let u = reference_control(
            &ModelKind::SingleIntegrator,
            &DVector::from_vec(vec![0.0, 0.0]),
            [0.5, -3.0],
            &ControllerGains::default(),
            &b,
        );
        assert_eq!(u.as_slice(), &[0.5, -1.0]);
    }
}
