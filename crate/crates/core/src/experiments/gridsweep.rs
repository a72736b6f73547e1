use super::{check_range, create_dir, csv_writer, io_err, pool, write_json, ExperimentError};
use crate::cbf::{assemble, ClassKChain};
use crate::dynamics::{circle_barrier, Dubins};
use crate::scenario::CircleObstacle;
use crate::volume::{mc_volume, proxy_value, HPolytope, InputBox, McConfig, VolumeMethod};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainVariant {
    pub name: String,
    pub gains: ClassKChain,
}

/// Dubins car at a fixed heading over an `X × Y` grid of cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSweepSpec {
    pub x: [f64; 2],
    pub y: [f64; 2],
    #[serde(default = "default_cells")]
    pub cells: [usize; 2],
    #[serde(default = "default_theta")]
    pub theta_deg: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// Turn-rate interval.
    #[serde(default = "default_bounds")]
    pub bounds: [f64; 2],
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub obstacles: Vec<CircleObstacle>,
    /// The first entry is the reference for the monotonicity check.
    pub chains: Vec<ChainVariant>,
}

fn default_cells() -> [usize; 2] {
    [60, 60]
}

fn default_theta() -> f64 {
    45.0
}

fn default_speed() -> f64 {
    1.0
}

fn default_bounds() -> [f64; 2] {
    [-0.5, 0.5]
}

fn default_mc_samples() -> usize {
    100
}

impl GridSweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        check_range("x", self.x)?;
        check_range("y", self.y)?;
        check_range("bounds", self.bounds)?;
        let err = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.cells.iter().any(|&c| c < 2) {
            return err("cell counts must be at least 2");
        }
        if !(self.bounds[0] < self.bounds[1]) {
            return err("turn-rate interval must have positive length");
        }
        if !(self.speed > 0.0) {
            return err("speed must be positive");
        }
        if self.mc_samples == 0 {
            return err("mc_samples must be at least 1");
        }
        if self.chains.is_empty() {
            return err("at least one chain variant is needed");
        }
        if self.chains.iter().any(|c| c.gains.len() != 2) {
            return err("Dubins distance barriers need two chain gains");
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0)) {
            return err("obstacle radii must be positive");
        }
        Ok(())
    }

    pub fn x_centers(&self) -> Vec<f64> {
        centers(self.x, self.cells[0])
    }

    pub fn y_centers(&self) -> Vec<f64> {
        centers(self.y, self.cells[1])
    }
}

fn centers(r: [f64; 2], n: usize) -> Vec<f64> {
    let w = (r[1] - r[0]) / n as f64;
    (0..n).map(|i| r[0] + (i as f64 + 0.5) * w).collect()
}

/// Length of `{u : a u ≤ b}` for a one-column polytope.
fn interval_length(p: &HPolytope) -> f64 {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..p.rows() {
        let (a, b) = (p.a()[(i, 0)], p.b()[i]);
        if a > 0.0 {
            hi = hi.min(b / a);
        } else if a < 0.0 {
            lo = lo.max(b / a);
        } else if b < 0.0 {
            return 0.0;
        }
    }
    (hi - lo).max(0.0)
}

/// One heatmap per method, indexed `[y][x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodGrid {
    pub chain: String,
    pub exact: Vec<Vec<f64>>,
    pub mc: Vec<Vec<f64>>,
    pub mc_std_error: Vec<Vec<f64>>,
    pub chebyshev: Vec<Vec<f64>>,
    pub ellipsoid: Vec<Vec<f64>>,
    /// Every first-order chain value is nonnegative at the cell.
    pub psi_nonnegative: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSweepReport {
    pub spec: GridSweepSpec,
    pub x_centers: Vec<f64>,
    pub y_centers: Vec<f64>,
    pub grids: Vec<MethodGrid>,
    /// Per variant after the first: cells with all reference `ψ¹ ≥ 0` whose
    /// exact or MC volume dropped below the reference. `None` when the
    /// variant's gains are not elementwise at least the reference's.
    pub monotonicity_violations: Vec<(String, Option<usize>)>,
    /// MC estimates outside `[0, interval length]`.
    pub mc_range_violations: usize,
    /// Proxy volumes above the MC estimate plus three standard errors.
    pub proxy_bound_violations: usize,
}

impl GridSweepReport {
    pub fn violations(&self) -> usize {
        self.monotonicity_violations.iter().filter_map(|(_, v)| *v).sum::<usize>()
            + self.mc_range_violations
            + self.proxy_bound_violations
    }
}

struct Cell {
    exact: f64,
    mc: f64,
    mc_se: f64,
    chebyshev: f64,
    ellipsoid: f64,
    psi_ok: bool,
}

fn evaluate_cell(
    spec: &GridSweepSpec,
    chain: &ClassKChain,
    bounds: &InputBox,
    px: f64,
    py: f64,
    seed: u64,
) -> Result<Cell, ExperimentError> {
    let model = Dubins { speed: spec.speed };
    let x = DVector::from_vec(vec![px, py, spec.theta_deg.to_radians()]);
    let specs: Vec<_> = spec
        .obstacles
        .iter()
        .enumerate()
        .map(|(i, o)| circle_barrier(format!("obs{i}"), &model, &o.center, o.radius, chain.clone(), None, 0.0))
        .collect();
    let asm = assemble(&specs, bounds, &model, 0.0, &x).map_err(|e| ExperimentError::Compute(e.to_string()))?;
    let inside = asm.psi.iter().any(|p| p[0] < 0.0);
    let psi_ok = !inside && asm.psi.iter().all(|p| p[1] >= 0.0);
    if inside {
        return Ok(Cell {
            exact: 0.0,
            mc: 0.0,
            mc_se: 0.0,
            chebyshev: 0.0,
            ellipsoid: 0.0,
            psi_ok,
        });
    }
    let p = &asm.polytope;
    let compute = |e: crate::volume::VolumeError| ExperimentError::Compute(e.to_string());
    let mc = mc_volume(p, bounds, &McConfig::new(spec.mc_samples, seed)).map_err(compute)?;
    Ok(Cell {
        exact: interval_length(p),
        mc: mc.value,
        mc_se: mc.std_error.unwrap_or(0.0),
        chebyshev: proxy_value(p, VolumeMethod::Chebyshev).map_err(compute)?.0,
        ellipsoid: proxy_value(p, VolumeMethod::Ellipsoid).map_err(compute)?.0,
        psi_ok,
    })
}

/// Evaluate every chain variant on every cell. MC draws use one seed per
/// cell shared by all variants, so their estimates are directly comparable.
pub fn gridsweep(spec: &GridSweepSpec, jobs: Option<usize>) -> Result<GridSweepReport, ExperimentError> {
    spec.validate()?;
    let bounds = InputBox::new(vec![spec.bounds[0]], vec![spec.bounds[1]])
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let xs = spec.x_centers();
    let ys = spec.y_centers();
    let nx = xs.len();
    let k = spec.mc_samples as f64;
    // Standard-error floor for estimates with zero or full hit counts.
    let se_floor = (spec.bounds[1] - spec.bounds[0]) * ((1.0 / k) * (1.0 - 1.0 / k) / k).sqrt();

    let workers = pool(jobs)?;
    let mut grids = Vec::with_capacity(spec.chains.len());
    let mut mc_range_violations = 0;
    let mut proxy_bound_violations = 0;
    for variant in &spec.chains {
        let cells: Vec<Cell> = workers.install(|| {
            (0..nx * ys.len())
                .into_par_iter()
                .map(|idx| {
                    let seed = spec.seed.wrapping_add(idx as u64);
                    evaluate_cell(spec, &variant.gains, &bounds, xs[idx % nx], ys[idx / nx], seed)
                })
                .collect::<Result<_, _>>()
        })?;
        for c in &cells {
            if c.mc < 0.0 || c.mc > bounds.volume() + 1e-12 {
                mc_range_violations += 1;
            }
            let band = c.mc + 3.0 * c.mc_se.max(se_floor);
            if c.chebyshev > band || c.ellipsoid > band {
                proxy_bound_violations += 1;
            }
        }
        let matrix = |f: &dyn Fn(&Cell) -> f64| -> Vec<Vec<f64>> {
            cells.chunks(nx).map(|row| row.iter().map(f).collect()).collect()
        };
        grids.push(MethodGrid {
            chain: variant.name.clone(),
            exact: matrix(&|c| c.exact),
            mc: matrix(&|c| c.mc),
            mc_std_error: matrix(&|c| c.mc_se),
            chebyshev: matrix(&|c| c.chebyshev),
            ellipsoid: matrix(&|c| c.ellipsoid),
            psi_nonnegative: cells.chunks(nx).map(|row| row.iter().map(|c| c.psi_ok).collect()).collect(),
        });
    }

    let reference = &grids[0];
    let base_gains = spec.chains[0].gains.gains();
    let monotonicity_violations = spec
        .chains
        .iter()
        .zip(&grids)
        .skip(1)
        .map(|(variant, grid)| {
            let looser = variant.gains.gains().iter().zip(base_gains).all(|(a, b)| a >= b);
            let count = looser.then(|| {
                let mut n = 0;
                for (j, row) in reference.psi_nonnegative.iter().enumerate() {
                    for (i, &ok) in row.iter().enumerate() {
                        if ok
                            && (grid.exact[j][i] < reference.exact[j][i] - 1e-12
                                || grid.mc[j][i] < reference.mc[j][i])
                        {
                            n += 1;
                        }
                    }
                }
                n
            });
            (variant.name.clone(), count)
        })
        .collect();

    Ok(GridSweepReport {
        spec: spec.clone(),
        x_centers: xs,
        y_centers: ys,
        grids,
        monotonicity_violations,
        mc_range_violations,
        proxy_bound_violations,
    })
}

fn write_matrix(path: &Path, m: &[Vec<f64>], clip: bool) -> Result<(), ExperimentError> {
    let mut w = csv_writer(path)?;
    for row in m {
        w.write_record(row.iter().map(|&v| if clip { v.clamp(0.0, 1.0) } else { v }.to_string()))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

impl GridSweepReport {
    /// One CSV matrix per chain and method (rows follow `y`, columns `x`),
    /// clipped `[0, 1]` copies, the axes, and `summary.json`.
    pub fn write(&self, out: &Path) -> Result<(), ExperimentError> {
        create_dir(out)?;
        for g in &self.grids {
            for (method, m) in [
                ("exact", &g.exact),
                ("mc", &g.mc),
                ("chebyshev", &g.chebyshev),
                ("ellipsoid", &g.ellipsoid),
            ] {
                write_matrix(&out.join(format!("{}_{method}.csv", g.chain)), m, false)?;
                write_matrix(&out.join(format!("{}_{method}_clipped.csv", g.chain)), m, true)?;
            }
            let mask: Vec<Vec<f64>> = g
                .psi_nonnegative
                .iter()
                .map(|r| r.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
                .collect();
            write_matrix(&out.join(format!("{}_psi_nonnegative.csv", g.chain)), &mask, false)?;
        }
        let path = out.join("axes.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["axis", "index", "center"])?;
        for (axis, vals) in [("x", &self.x_centers), ("y", &self.y_centers)] {
            for (i, v) in vals.iter().enumerate() {
                w.write_record([axis.to_string(), i.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(io_err(&path))?;

        #[derive(Serialize)]
        struct Summary<'a> {
            spec: &'a GridSweepSpec,
            cells: usize,
            monotonicity_violations: &'a [(String, Option<usize>)],
            mc_range_violations: usize,
            proxy_bound_violations: usize,
        }
        write_json(
            &out.join("summary.json"),
            &Summary {
                spec: &self.spec,
                cells: self.x_centers.len() * self.y_centers.len(),
                monotonicity_violations: &self.monotonicity_violations,
                mc_range_violations: self.mc_range_violations,
                proxy_bound_violations: self.proxy_bound_violations,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSweepSpec {
        GridSweepSpec {
            x: [0.0, 4.0],
            y: [0.0, 4.0],
            cells: [8, 8],
            theta_deg: 45.0,
            speed: 1.0,
            bounds: [-0.5, 0.5],
            mc_samples: 100,
            seed: 3,
            obstacles: vec![CircleObstacle { center: [2.25, 2.25], radius: 0.6 }],
            chains: vec![
                ChainVariant { name: "base".into(), gains: ClassKChain::new(vec![1.0, 1.0]).unwrap() },
                ChainVariant { name: "double".into(), gains: ClassKChain::new(vec![2.0, 2.0]).unwrap() },
            ],
        }
    }

    #[test]
    fn interval_length_of_box_and_cut() {
        let b = InputBox::new(vec![-0.5], vec![0.5]).unwrap();
        let p = HPolytope::from_box(&b);
        assert_eq!(interval_length(&p), 1.0);
        let a = nalgebra::DMatrix::from_element(1, 1, 2.0);
        let p = HPolytope::from_cbf_rows(&a, &DVector::from_element(1, 0.2), &b).unwrap();
        assert!((interval_length(&p) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn far_cells_see_full_interval_and_inside_cells_zero() {
        let r = gridsweep(&spec(), Some(1)).unwrap();
        let g = &r.grids[0];
        // (3.75, 3.75) heads straight away from the obstacle.
        assert_eq!(g.exact[7][7], 1.0);
        assert_eq!(g.mc[7][7], 1.0);
        // (0.25, 0.25) heads straight at it: a = 0 and b = 2v² + 2(k1 + k2)(p − c)·ẋ + k1k2 h < 0.
        assert_eq!(g.exact[0][0], 0.0);
        // (2.25, 2.25) is the obstacle center.
        assert_eq!(g.exact[4][4], 0.0);
        assert_eq!(g.ellipsoid[4][4], 0.0);
        assert_eq!(r.violations(), 0);
        assert_eq!(r.monotonicity_violations, vec![("double".to_string(), Some(0))]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec();
        s.cells = [1, 5];
        assert!(s.validate().is_err());
        let mut s = spec();
        s.chains[0].gains = ClassKChain::new(vec![1.0]).unwrap();
        assert!(s.validate().is_err());
    }
}
