use super::{BarrierSpec, CbfError};
use crate::dynamics::DynamicsModel;
use crate::volume::{HPolytope, InputBox};
use nalgebra::{DMatrix, DVector};

/// Control row `a·u ≤ b` of one barrier and its chain values
/// `(ψ⁰, …, ψʳ⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HocbfRow {
    pub a: DVector<f64>,
    pub b: f64,
    pub psi: Vec<f64>,
}

/// Row of `ψ̇ʳ⁻¹ + αʳ(ψʳ⁻¹) ≥ 0` for relative degree one or two.
///
/// For degree two the control is assumed not to enter `ψ¹`, i.e.
/// `∇h·g = 0`, which holds for position barriers on the car models.
pub fn hocbf_row(
    spec: &BarrierSpec,
    model: &dyn DynamicsModel,
    t: f64,
    x: &DVector<f64>,
) -> Result<HocbfRow, CbfError> {
    let n = model.state_dim();
    if x.len() != n {
        return Err(CbfError::Dimension(format!("state has {} entries, model expects {n}", x.len())));
    }
    let e = spec.eval(t, x);
    if e.grad.len() != n {
        return Err(CbfError::Dimension(format!(
            "barrier {} gradient has {} entries, state has {n}",
            spec.label,
            e.grad.len()
        )));
    }
    let f = model.drift(x);
    let g = model.input_matrix(x);
    let k = spec.chain.gains();
    match k.len() {
        1 => Ok(HocbfRow {
            a: -g.tr_mul(&e.grad),
            b: e.grad.dot(&f) + e.rate + k[0] * e.h,
            psi: vec![e.h],
        }),
        2 => {
            if e.hess.shape() != (n, n) || e.grad_rate.len() != n {
                return Err(CbfError::Dimension(format!(
                    "barrier {} lacks second-order terms",
                    spec.label
                )));
            }
            let psi1 = e.grad.dot(&f) + e.rate + k[0] * e.h;
            let jac: DMatrix<f64> = model.drift_jacobian(x);
            let grad_psi1 = &e.hess * &f + jac.tr_mul(&e.grad) + &e.grad_rate + &e.grad * k[0];
            let rate_psi1 = e.grad_rate.dot(&f) + e.rate_rate + k[0] * e.rate;
            Ok(HocbfRow {
                a: -g.tr_mul(&grad_psi1),
                b: grad_psi1.dot(&f) + rate_psi1 + k[1] * psi1,
                psi: vec![e.h, psi1],
            })
        }
        degree => Err(CbfError::UnsupportedDegree {
            label: spec.label.clone(),
            degree,
        }),
    }
}

/// Feasible polytope at `(t, x)` plus the chain values of every barrier.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub polytope: HPolytope,
    pub psi: Vec<Vec<f64>>,
}

/// One row per barrier in the given order, then the box rows.
pub fn assemble(
    specs: &[BarrierSpec],
    bounds: &InputBox,
    model: &dyn DynamicsModel,
    t: f64,
    x: &DVector<f64>,
) -> Result<Assembly, CbfError> {
    let m = model.control_dim();
    if bounds.dim() != m {
        return Err(CbfError::Dimension(format!(
            "input box has {} entries, model has {m} controls",
            bounds.dim()
        )));
    }
    let mut a = DMatrix::zeros(specs.len(), m);
    let mut b = DVector::zeros(specs.len());
    let mut psi = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let row = hocbf_row(spec, model, t, x)?;
        a.set_row(i, &row.a.transpose());
        b[i] = row.b;
        psi.push(row.psi);
    }
    Ok(Assembly {
        polytope: HPolytope::from_cbf_rows(&a, &b, bounds)?,
        psi,
    })
}

pub fn assemble_polytope(
    specs: &[BarrierSpec],
    bounds: &InputBox,
    model: &dyn DynamicsModel,
    t: f64,
    x: &DVector<f64>,
) -> Result<HPolytope, CbfError> {
    Ok(assemble(specs, bounds, model, t, x)?.polytope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbf::ClassKChain;
    use crate::dynamics::{CircleBarrier, DoubleIntegrator, SingleIntegrator};
    use crate::volume::{mc_volume, McConfig};
    use std::sync::Arc;

    fn unit_disk_keep_in(chain: Vec<f64>, position: Vec<usize>, state_dim: usize) -> BarrierSpec {
        let centre = vec![0.0; position.len()];
        let f = CircleBarrier::keep_inside(centre, 1.0, position, state_dim);
        BarrierSpec::new("disk", ClassKChain::new(chain).unwrap(), Arc::new(f))
    }

    #[test]
    fn single_integrator_disk_row() {
        let spec = unit_disk_keep_in(vec![1.0], vec![0, 1], 2);
        let row = hocbf_row(&spec, &SingleIntegrator, 0.0, &DVector::from_vec(vec![0.5, 0.0])).unwrap();
        assert!((row.a[0] - 1.0).abs() < 1e-15 && row.a[1] == 0.0);
        assert!((row.b - 0.75).abs() < 1e-15);

        let row = hocbf_row(&spec, &SingleIntegrator, 0.0, &DVector::zeros(2)).unwrap();
        assert_eq!(row.a.norm(), 0.0);
        assert!((row.b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn double_integrator_second_order_row() {
        let spec = unit_disk_keep_in(vec![2.0, 6.0], vec![0], 2);
        let row = hocbf_row(&spec, &DoubleIntegrator, 0.0, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(row.psi, vec![1.0, 2.0]);
        assert_eq!(row.a[0], 0.0);
        assert!((row.b - 10.0).abs() < 1e-12);
    }

    #[test]
    fn third_order_is_rejected() {
        let spec = unit_disk_keep_in(vec![1.0, 1.0, 1.0], vec![0, 1], 2);
        assert!(matches!(
            hocbf_row(&spec, &SingleIntegrator, 0.0, &DVector::zeros(2)),
            Err(CbfError::UnsupportedDegree { degree: 3, .. })
        ));
    }

    #[test]
    fn assembly_order_and_clipped_area() {
        let bounds = InputBox::symmetric(&[1.0, 1.0]).unwrap();
        let p = assemble_polytope(&[], &bounds, &SingleIntegrator, 0.0, &DVector::zeros(2)).unwrap();
        assert_eq!(p.rows(), 4);

        let spec = unit_disk_keep_in(vec![1.0], vec![0, 1], 2);
        let p = assemble_polytope(&[spec], &bounds, &SingleIntegrator, 0.0, &DVector::from_vec(vec![0.5, 0.0]))
            .unwrap();
        assert_eq!(p.rows(), 5);
        let v = mc_volume(&p, &bounds, &McConfig::new(20_000, 1)).unwrap();
        // Box clipped at u_x ≤ 0.75 has area 2·1.75.
        assert!((v.value - 3.5).abs() < 3.0 * v.std_error.unwrap() + 1e-12);
    }
}
