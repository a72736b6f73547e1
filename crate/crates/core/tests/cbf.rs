mod common;

use fscbf::cbf::{
    assemble, cbf_qp_control, fs_cbf_qp_control, hocbf_row, volume_of_state, volume_state_time_gradients,
    ClassKChain, ControlStatus, FsCbfParams,
};
use fscbf::dynamics::{
    circle_barrier, reference_control, step_euler, ControllerGains, DynamicsModel, Dubins, ModelKind,
    SingleIntegrator, Unicycle,
};
use fscbf::volume::{InputBox, VolumeMethod};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain(g: &[f64]) -> ClassKChain {
    ClassKChain::new(g.to_vec()).unwrap()
}

/// `‖p − c(t)‖² − R²` written out directly, for a center moving at `vel`.
fn h_direct(t: f64, x: &DVector<f64>, c: [f64; 2], vel: [f64; 2], r: f64) -> f64 {
    let dx = x[0] - (c[0] + vel[0] * t);
    let dy = x[1] - (c[1] + vel[1] * t);
    dx * dx + dy * dy - r * r
}

/// Time derivative of `phi` along `ẋ = f + g u`, by central differences
/// in the joint `(t, x)` direction.
fn along(
    phi: &dyn Fn(f64, &DVector<f64>) -> f64,
    model: &dyn DynamicsModel,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    eps: f64,
) -> f64 {
    let xdot = model.drift(x) + model.input_matrix(x) * u;
    (phi(t + eps, &(x + &xdot * eps)) - phi(t - eps, &(x - &xdot * eps))) / (2.0 * eps)
}

#[test]
fn unicycle_rows_match_differentiated_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = Unicycle;
    let zero = DVector::zeros(2);
    for _ in 0..100 {
        let c = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let vel = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let r = rng.gen_range(0.2..0.8);
        let (k1, k2) = (rng.gen_range(0.5..3.0), rng.gen_range(0.5..6.0));
        let t = rng.gen_range(0.0..2.0);
        let x = DVector::from_vec(vec![
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-3.0..3.0),
        ]);
        let spec = circle_barrier("c", &model, &c, r, chain(&[k1, k2]), Some(&vel), 0.0);
        let row = hocbf_row(&spec, &model, t, &x).unwrap();

        let h = |t: f64, x: &DVector<f64>| h_direct(t, x, c, vel, r);
        // ψ¹ = ḣ + k₁h; the input does not enter ḣ for this model.
        let psi1 = |t: f64, x: &DVector<f64>| along(&h, &model, t, x, &zero, 1e-5) + k1 * h(t, x);
        assert!((row.psi[1] - psi1(t, &x)).abs() < 1e-6 * (1.0 + row.psi[1].abs()));

        for _ in 0..3 {
            let u = DVector::from_vec(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
            // The row reads −(ψ̇¹ + k₂ψ¹) = a·u − b.
            let lhs = row.a.dot(&u) - row.b;
            let oracle = -(along(&psi1, &model, t, &x, &u, 1e-3) + k2 * psi1(t, &x));
            assert!(
                (lhs - oracle).abs() < 1e-4 * (1.0 + oracle.abs()),
                "row {lhs} vs differentiated chain {oracle}"
            );
        }
    }
}

#[test]
fn single_integrator_rows_match_differentiated_barrier() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = SingleIntegrator;
    for _ in 0..100 {
        let c = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let vel = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let r = rng.gen_range(0.2..0.8);
        let k = rng.gen_range(0.2..3.0);
        let x = DVector::from_vec(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]);
        let spec = circle_barrier("c", &model, &c, r, chain(&[k]), Some(&vel), 0.0);
        let row = hocbf_row(&spec, &model, 0.5, &x).unwrap();
        let h = |t: f64, x: &DVector<f64>| h_direct(t, x, c, vel, r);
        let u = DVector::from_vec(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
        let oracle = -(along(&h, &model, 0.5, &x, &u, 1e-5) + k * h(0.5, &x));
        assert!((row.a.dot(&u) - row.b - oracle).abs() < 1e-6 * (1.0 + oracle.abs()));
    }
}

/// Exact length of `{u : a u ≤ b}` for one-column data.
fn interval(a: &nalgebra::DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..b.len() {
        let ai = a[(i, 0)];
        if ai > 0.0 {
            hi = hi.min(b[i] / ai);
        } else if ai < 0.0 {
            lo = lo.max(b[i] / ai);
        } else if b[i] < 0.0 {
            return 0.0;
        }
    }
    (hi - lo).max(0.0)
}

#[test]
fn doubling_class_k_gains_never_shrinks_dubins_interval() {
    let model = Dubins { speed: 1.0 };
    let bounds = InputBox::new(vec![-0.5], vec![0.5]).unwrap();
    let obstacles = [([2.0, 3.5], 0.6), ([3.6, 2.2], 0.7), ([4.2, 4.3], 0.5)];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0;
    for _ in 0..2000 {
        let x = DVector::from_vec(vec![rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0), rng.gen_range(-3.1..3.1)]);
        let build = |g: &[f64]| -> Vec<_> {
            obstacles
                .iter()
                .map(|(c, r)| circle_barrier("o", &model, c, *r, chain(g), None, 0.0))
                .collect()
        };
        let base = assemble(&build(&[1.0, 1.0]), &bounds, &model, 0.0, &x).unwrap();
        if base.psi.iter().any(|p| p[0] < 0.0 || p[1] < 0.0) {
            continue;
        }
        let doubled = assemble(&build(&[2.0, 2.0]), &bounds, &model, 0.0, &x).unwrap();
        let (lb, ld) = (
            interval(base.polytope.a(), base.polytope.b()),
            interval(doubled.polytope.a(), doubled.polytope.b()),
        );
        assert!(ld >= lb - 1e-12, "doubled gains gave {ld} < {lb} at {x:?}");
        checked += 1;
    }
    assert!(checked > 500);
}

fn run_cbf_qp(kind: ModelKind, x0: Vec<f64>, goal: [f64; 2], seconds: f64) -> (f64, bool) {
    let model = kind.build();
    let (lo, hi) = kind.default_bounds();
    let bounds = InputBox::new(lo, hi).unwrap();
    let spec = circle_barrier(
        "o",
        model.as_ref(),
        &[1.5, 0.05],
        0.5,
        if kind.distance_degree() == 1 { chain(&[1.0]) } else { chain(&[2.0, 6.0]) },
        None,
        0.0,
    );
    let mut x = DVector::from_vec(x0);
    let mut min_h = f64::INFINITY;
    let gains = ControllerGains::default();
    for k in 0..(seconds / 0.01) as usize {
        let t = k as f64 * 0.01;
        let asm = assemble(std::slice::from_ref(&spec), &bounds, model.as_ref(), t, &x).unwrap();
        min_h = min_h.min(asm.psi[0][0]);
        let u_ref = reference_control(&kind, &x, goal, &gains, &bounds);
        let d = cbf_qp_control(&u_ref, &asm.polytope).unwrap();
        if d.status != ControlStatus::Ok {
            return (min_h, false);
        }
        x = step_euler(model.as_ref(), &x, &d.u, 0.01);
    }
    (min_h, true)
}

#[test]
fn single_barrier_keeps_robot_safe_for_ten_seconds() {
    let (h, ok) = run_cbf_qp(ModelKind::SingleIntegrator, vec![0.0, 0.0], [3.0, 0.0], 10.0);
    assert!(ok && h >= -1e-3, "single integrator min h {h}");
    let (h, ok) = run_cbf_qp(ModelKind::Unicycle, vec![0.0, 0.0, 0.5, 0.0], [3.0, 0.0], 10.0);
    assert!(ok && h >= -1e-3, "unicycle min h {h}");
}

#[test]
fn slack_stays_zero_when_reference_is_comfortably_feasible() {
    let model = Unicycle;
    let bounds = InputBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
    let spec = circle_barrier("o", &model, &[8.0, 8.0], 0.5, chain(&[2.0, 6.0]), None, 0.0);
    let x = DVector::from_vec(vec![0.0, 0.0, 0.5, 0.0]);
    let u_ref = DVector::from_vec(vec![0.2, -0.1]);
    let d = fs_cbf_qp_control(&u_ref, &[spec], &bounds, &model, &FsCbfParams::default(), 0.0, &x).unwrap();
    assert_eq!(d.status, ControlStatus::Ok);
    assert!(d.delta.unwrap().abs() < 1e-9);
    assert!((&d.u - &u_ref).norm() < 1e-9);
}

#[test]
fn state_gradient_matches_end_to_end_differences() {
    let model = Unicycle;
    let bounds = InputBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
    let specs = vec![
        circle_barrier("a", &model, &[1.2, 0.4], 0.5, chain(&[2.0, 6.0]), None, 0.0),
        circle_barrier("b", &model, &[0.3, 1.3], 0.4, chain(&[2.0, 6.0]), None, 0.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut checked = 0;
    for method in [VolumeMethod::Ellipsoid, VolumeMethod::Chebyshev] {
        let params = FsCbfParams {
            volume_method: method,
            ..FsCbfParams::default()
        };
        for _ in 0..40 {
            let x = DVector::from_vec(vec![
                rng.gen_range(-0.5..0.3),
                rng.gen_range(-0.5..0.3),
                rng.gen_range(0.2..1.2),
                rng.gen_range(0.0..1.5),
            ]);
            let Ok(g) = volume_state_time_gradients(&specs, &bounds, &model, &params, 0.0, &x) else {
                continue;
            };
            if g.volume.nonsmooth {
                continue;
            }
            let step = 1e-5;
            let mut fd = DVector::zeros(4);
            let mut active_changed = false;
            for k in 0..4 {
                let mut xp = x.clone();
                xp[k] += step;
                let mut xm = x.clone();
                xm[k] -= step;
                let vp = volume_of_state(&specs, &bounds, &model, &params, 0.0, &xp).unwrap();
                let vm = volume_of_state(&specs, &bounds, &model, &params, 0.0, &xm).unwrap();
                active_changed |= vp.active_set != vm.active_set;
                fd[k] = (vp.value - vm.value) / (2.0 * step);
            }
            if active_changed {
                continue;
            }
            let diff = (&g.grad_x - &fd).norm();
            if fd.norm() < 1e-6 {
                // No constraint touches the proxy here.
                assert!(diff < 1e-6);
                continue;
            }
            assert!(diff < 1e-3 * fd.norm(), "{method}: chain-rule {:?} vs differences {:?}", g.grad_x, fd);
            checked += 1;
        }
    }
    assert!(checked >= 40, "only {checked} states compared");
}

#[test]
fn approaching_human_shrinks_volume_over_time() {
    let model = Unicycle;
    let bounds = InputBox::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
    let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]);
    let human = circle_barrier("h", &model, &[1.0, 0.2], 0.6, chain(&[2.0, 6.0]), Some(&[-1.0, 0.0]), 0.0);
    let g = volume_state_time_gradients(&[human], &bounds, &model, &FsCbfParams::default(), 0.0, &x).unwrap();
    assert!(g.dv_dt < 0.0, "dV/dt = {}", g.dv_dt);

    let receding = circle_barrier("h", &model, &[1.0, 0.2], 0.6, chain(&[2.0, 6.0]), Some(&[1.0, 0.0]), 0.0);
    let g = volume_state_time_gradients(&[receding], &bounds, &model, &FsCbfParams::default(), 0.0, &x).unwrap();
    assert!(g.dv_dt > 0.0, "dV/dt = {}", g.dv_dt);

    let fixed = circle_barrier("o", &model, &[1.0, 0.2], 0.6, chain(&[2.0, 6.0]), None, 0.0);
    let g = volume_state_time_gradients(&[fixed], &bounds, &model, &FsCbfParams::default(), 0.0, &x).unwrap();
    assert_eq!(g.dv_dt, 0.0);
}
