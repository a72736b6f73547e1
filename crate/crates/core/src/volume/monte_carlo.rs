//! Sampling estimators. Both draw the same uniform stream from the box for
//! a given seed, so the smoothed estimate never exceeds the plain one.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HPolytope, InputBox, VolumeError, VolumeMethod, VolumeResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// Width of the smoothstep band; only used by the smoothed estimator.
    pub smoothing_width: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: 0,
            smoothing_width: 0.0,
        }
    }
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            smoothing_width: 0.0,
        }
    }
}

/// Cubic smoothstep on `[0, width]`: 0 below, 1 above, `3s² − 2s³` between.
/// Never exceeds the unit step.
pub fn smooth_step(y: f64, width: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= width {
        1.0
    } else {
        let s = y / width;
        s * s * (3.0 - 2.0 * s)
    }
}

fn check(p: &HPolytope, bounds: &InputBox, cfg: &McConfig) -> Result<(), VolumeError> {
    if cfg.samples == 0 {
        return Err(VolumeError::Config("sample count must be at least 1".into()));
    }
    if bounds.dim() != p.dim() {
        return Err(VolumeError::Shape(format!(
            "box dimension {} differs from polytope dimension {}",
            bounds.dim(),
            p.dim()
        )));
    }
    Ok(())
}

/// Visits the `cfg.samples` uniform points of the seeded stream.
fn for_each_sample(bounds: &InputBox, cfg: &McConfig, mut visit: impl FnMut(&DVector<f64>)) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = bounds.dim();
    let mut u = DVector::zeros(m);
    for _ in 0..cfg.samples {
        for j in 0..m {
            let r: f64 = rng.gen();
            u[j] = bounds.lower[j] + (bounds.upper[j] - bounds.lower[j]) * r;
        }
        visit(&u);
    }
}

fn result(method: VolumeMethod, value: f64, std_error: f64) -> VolumeResult {
    VolumeResult {
        value,
        grad_a: None,
        grad_b: None,
        method,
        degenerate: value == 0.0,
        std_error: Some(std_error),
        ..VolumeResult::empty(method)
    }
}

/// `vol(box) · hits / K`, where a hit satisfies every non-bound row.
pub fn mc_volume(p: &HPolytope, bounds: &InputBox, cfg: &McConfig) -> Result<VolumeResult, VolumeError> {
    check(p, bounds, cfg)?;
    let rows: Vec<usize> = p.cbf_rows().collect();
    let mut hits = 0usize;
    if !p.is_trivially_empty() {
        for_each_sample(bounds, cfg, |u| {
            if rows.iter().all(|&i| p.slack(i, u) >= 0.0) {
                hits += 1;
            }
        });
    }
    let k = cfg.samples as f64;
    let frac = hits as f64 / k;
    let vol = bounds.volume();
    Ok(result(
        VolumeMethod::MonteCarlo,
        vol * frac,
        vol * (frac * (1.0 - frac) / k).sqrt(),
    ))
}

/// `vol(box) · (1/K) Σⱼ Πᵢ H_s(bᵢ − aᵢ·pⱼ)` over non-bound rows.
pub fn smoothed_mc_volume(
    p: &HPolytope,
    bounds: &InputBox,
    cfg: &McConfig,
) -> Result<VolumeResult, VolumeError> {
    check(p, bounds, cfg)?;
    if !(cfg.smoothing_width > 0.0) {
        return Err(VolumeError::Config("smoothing width must be positive".into()));
    }
    let rows: Vec<usize> = p.cbf_rows().collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    if !p.is_trivially_empty() {
        for_each_sample(bounds, cfg, |u| {
            let w: f64 = rows
                .iter()
                .map(|&i| smooth_step(p.slack(i, u), cfg.smoothing_width))
                .product();
            sum += w;
            sum_sq += w * w;
        });
    }
    let k = cfg.samples as f64;
    let mean = sum / k;
    let var = (sum_sq / k - mean * mean).max(0.0);
    let vol = bounds.volume();
    Ok(result(
        VolumeMethod::SmoothedMonteCarlo,
        vol * mean,
        vol * (var / k).sqrt(),
    ))
}
