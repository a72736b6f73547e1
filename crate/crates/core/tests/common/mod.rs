//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use fscbf::volume::{HPolytope, InputBox};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn unit_box(m: usize) -> InputBox {
    InputBox::symmetric(&vec![1.0; m]).unwrap()
}

pub fn polytope(rows: &[(&[f64], f64)], bounds: &InputBox) -> HPolytope {
    let m = bounds.dim();
    let a = DMatrix::from_fn(rows.len(), m, |i, j| rows[i].0[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    HPolytope::from_cbf_rows(&a, &b, bounds).unwrap()
}

pub fn half_box() -> HPolytope {
    polytope(&[(&[1.0, 0.0], 0.0)], &unit_box(2))
}

pub fn triangle() -> HPolytope {
    polytope(
        &[(&[-1.0, 0.0], 0.0), (&[0.0, -1.0], 0.0), (&[1.0, 1.0], 1.0)],
        &unit_box(2),
    )
}

pub fn scaled_box() -> HPolytope {
    HPolytope::from_box(&InputBox::symmetric(&[2.0, 1.0]).unwrap())
}

/// Box `[-1,1]^m` cut by `cuts` halfspaces with random unit normals and
/// offsets in `[0.2, 0.9]`, so the origin stays interior.
pub fn random_polytope(rng: &mut ChaCha8Rng, m: usize, cuts: usize) -> HPolytope {
    let mut a = DMatrix::zeros(cuts, m);
    let mut b = DVector::zeros(cuts);
    for i in 0..cuts {
        let mut n = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        while n.norm() < 1e-3 {
            n = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        }
        n /= n.norm();
        a.set_row(i, &n.transpose());
        b[i] = rng.gen_range(0.2..0.9);
    }
    HPolytope::from_cbf_rows(&a, &b, &unit_box(m)).unwrap()
}

/// Largest `det B` over 2-D ellipses `{B z + d}` inside the polytope,
/// found by a shrinking grid search over `(d₁, d₂, B₁₁, B₁₂, B₂₂)`.
pub fn brute_force_ellipse(p: &HPolytope) -> f64 {
    assert_eq!(p.dim(), 2);
    let contained = |x: &[f64; 5]| -> bool {
        let (b11, b12, b22) = (x[2], x[3], x[4]);
        if b11 <= 0.0 || b11 * b22 - b12 * b12 <= 0.0 {
            return false;
        }
        (0..p.rows()).all(|i| {
            let a = p.a().row(i);
            let w0 = b11 * a[0] + b12 * a[1];
            let w1 = b12 * a[0] + b22 * a[1];
            (w0 * w0 + w1 * w1).sqrt() + a[0] * x[0] + a[1] * x[1] <= p.b()[i]
        })
    };
    let det = |x: &[f64; 5]| x[2] * x[4] - x[3] * x[3];

    let mut best = [0.0, 0.0, 1e-3, 0.0, 1e-3];
    let mut best_det = 0.0;
    // Coarse start: centers on a grid, small round ellipse.
    for i in 0..41 {
        for j in 0..41 {
            let x = [-1.0 + i as f64 * 0.05, -1.0 + j as f64 * 0.05, 0.02, 0.0, 0.02];
            if contained(&x) && det(&x) > best_det {
                best = x;
                best_det = det(&x);
            }
        }
    }
    assert!(best_det > 0.0, "no ellipse fits");
    let mut radius = [0.5, 0.5, 0.5, 0.5, 0.5];
    for _ in 0..200 {
        let mut improved = false;
        let levels = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let centre = best;
        for l0 in levels {
            for l1 in levels {
                for l2 in levels {
                    for l3 in levels {
                        for l4 in levels {
                            let x = [
                                centre[0] + l0 * radius[0],
                                centre[1] + l1 * radius[1],
                                centre[2] + l2 * radius[2],
                                centre[3] + l3 * radius[3],
                                centre[4] + l4 * radius[4],
                            ];
                            if det(&x) > best_det && contained(&x) {
                                best = x;
                                best_det = det(&x);
                                improved = true;
                            }
                        }
                    }
                }
            }
        }
        if !improved {
            for r in radius.iter_mut() {
                *r *= 0.6;
            }
            if radius[0] < 1e-9 {
                break;
            }
        }
    }
    best_det
}

/// Optimal value of `min ½xᵀQx + qᵀx s.t. Ax ≤ b` from accelerated
/// projected gradient ascent on the dual `λ ≥ 0`.
pub fn dual_projected_gradient(
    q_mat: &DMatrix<f64>,
    q: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    iterations: usize,
) -> f64 {
    let qinv = q_mat.clone().try_inverse().unwrap();
    if a.nrows() == 0 {
        return -0.5 * q.dot(&(&qinv * q));
    }
    // Dual: maximize −½(q + Aᵀλ)ᵀQ⁻¹(q + Aᵀλ) − bᵀλ.
    let hess = a * &qinv * a.transpose();
    let lip = hess.symmetric_eigenvalues().amax().max(1e-12);
    let dual_value = |lam: &DVector<f64>| {
        let v = q + a.transpose() * lam;
        -0.5 * v.dot(&(&qinv * &v)) - b.dot(lam)
    };
    let mut lam = DVector::zeros(a.nrows());
    let mut y = lam.clone();
    let mut tk = 1.0f64;
    for _ in 0..iterations {
        let v = q + a.transpose() * &y;
        let grad = -(a * (&qinv * v)) - b;
        let next = (&y + grad / lip).map(|v: f64| v.max(0.0));
        let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        y = &next + (&next - &lam) * ((tk - 1.0) / tn);
        lam = next;
        tk = tn;
    }
    dual_value(&lam)
}
