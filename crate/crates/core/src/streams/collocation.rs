//! Random-coordinate collocation of `Δu = f` on the unit cube with quadric RBFs.
//!
//! The exact solution is `u(t) = sin(πt₁)·sin(πt₂/2)·sin(3πt₃/2)`, so the
//! boundary data is `u` itself and the interior right-hand side is `−(7π²/2)·u`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StreamSource;
use crate::error::{invalid, Error, Result};
use crate::numerics::{symmetric_eigen, DenseMatrix, RngHandle, SimRng};
use crate::subexp::{collocation_params, SubExpParams};

/// Monte-Carlo draws used by [`collocation_stream`] for its initial `σ_min` estimate.
pub const DEFAULT_SIGMA_MIN_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Interior,
    Face,
    Edge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubePoint {
    pub t: [f64; 3],
    pub region: Region,
}

impl CubePoint {
    pub fn is_boundary(&self) -> bool {
        self.region != Region::Interior
    }
}

fn open_unit(rng: &mut SimRng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Interior w.p. 2/3, a uniform point on a uniform face w.p. 1/6, on a uniform edge w.p. 1/6.
pub fn sample_cube_point(rng: &mut SimRng) -> CubePoint {
    let u: f64 = rng.random();
    if u < 2.0 / 3.0 {
        return CubePoint {
            t: [open_unit(rng), open_unit(rng), open_unit(rng)],
            region: Region::Interior,
        };
    }
    if u < 5.0 / 6.0 {
        let face = rng.random_range(0..6usize);
        let (axis, side) = (face / 2, (face % 2) as f64);
        let mut t = [0.0; 3];
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = if i == axis { side } else { open_unit(rng) };
        }
        return CubePoint {
            t,
            region: Region::Face,
        };
    }
    let edge = rng.random_range(0..12usize);
    let (free, bits) = (edge / 4, edge % 4);
    let mut t = [0.0; 3];
    let mut fixed = [(bits & 1) as f64, ((bits >> 1) & 1) as f64].into_iter();
    for (i, ti) in t.iter_mut().enumerate() {
        *ti = if i == free {
            rng.random::<f64>()
        } else {
            fixed.next().unwrap()
        };
    }
    CubePoint {
        t,
        region: Region::Edge,
    }
}

fn dist_sq(t: &[f64; 3], chi: &[f64; 3]) -> f64 {
    (0..3).map(|i| (t[i] - chi[i]) * (t[i] - chi[i])).sum()
}

/// `√(‖t − χ‖² + 1)`.
pub fn quadric_rbf(t: &[f64; 3], chi: &[f64; 3]) -> f64 {
    (dist_sq(t, chi) + 1.0).sqrt()
}

/// `Δφ = (2r² + 3) / (r² + 1)^{3/2}` in three dimensions.
pub fn quadric_rbf_laplacian(t: &[f64; 3], chi: &[f64; 3]) -> f64 {
    let s = dist_sq(t, chi) + 1.0;
    (2.0 * s + 1.0) / (s * s.sqrt())
}

/// Boundary data `sin(πt₁)·sin(πt₂/2)·sin(3πt₃/2)`.
pub fn boundary_value(t: &[f64; 3]) -> f64 {
    (PI * t[0]).sin() * (PI * t[1] / 2.0).sin() * (1.5 * PI * t[2]).sin()
}

/// Interior right-hand side `−(7π²/2)·sin(πt₁)·sin(πt₂/2)·sin(3πt₃/2)`.
pub fn source_term(t: &[f64; 3]) -> f64 {
    -3.5 * PI * PI * boundary_value(t)
}

/// The `(g+1)³` nodes `(i/g, j/g, k/g)`, with `g = 1/ε`.
pub fn control_grid(eps: f64) -> Result<Vec<[f64; 3]>> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("eps", format!("grid gap must lie in (0, 1], got {eps}")));
    }
    let inv = 1.0 / eps;
    let g = inv.round();
    if (inv - g).abs() > 1e-9 * inv {
        return Err(invalid("eps", format!("1/eps must be an integer, got {inv}")));
    }
    let g = g as usize;
    let mut pts = Vec::with_capacity((g + 1).pow(3));
    for i in 0..=g {
        for j in 0..=g {
            for k in 0..=g {
                pts.push([i as f64 / g as f64, j as f64 / g as f64, k as f64 / g as f64]);
            }
        }
    }
    Ok(pts)
}

pub(super) fn push_row(pt: &CubePoint, controls: &[[f64; 3]], a: &mut Vec<f64>, b: &mut Vec<f64>) {
    if pt.is_boundary() {
        a.extend(controls.iter().map(|c| quadric_rbf(&pt.t, c)));
        b.push(boundary_value(&pt.t));
    } else {
        a.extend(controls.iter().map(|c| quadric_rbf_laplacian(&pt.t, c)));
        b.push(source_term(&pt.t));
    }
}

/// Collocation stream on the `ε`-grid of control points, `p` random rows per observation.
///
/// The sub-Exponential parameters come from `collocation_params` with `σ_min`
/// estimated on [`DEFAULT_SIGMA_MIN_SAMPLES`] draws of a stream derived from `rng`.
pub fn collocation_stream(eps: f64, p: usize, rng: RngHandle) -> Result<StreamSource> {
    let controls = control_grid(eps)?;
    collocation_from_controls(controls, p, rng)
}

/// Collocation stream with arbitrary control points.
pub fn collocation_from_controls(controls: Vec<[f64; 3]>, p: usize, rng: RngHandle) -> Result<StreamSource> {
    if p < 1 {
        return Err(invalid("p", "must be >= 1"));
    }
    if controls.is_empty() {
        return Err(Error::Empty("collocation control points"));
    }
    let n = controls.len();
    let placeholder = SubExpParams::new(0.0, 0.0)?;
    let mut src = StreamSource::collocation(controls, p, placeholder, rng);
    let smin = estimate_gram_sigma_min(&src, DEFAULT_SIGMA_MIN_SAMPLES, rng.derive(u64::MAX))?;
    let (_, se) = collocation_params(n, smin)?;
    src.set_se_params(se);
    Ok(src)
}

/// Smallest eigenvalue above the rank cutoff of the Monte-Carlo mean of `ÃᵀÃ`.
pub fn estimate_gram_sigma_min(source: &StreamSource, n_samples: usize, rng: RngHandle) -> Result<f64> {
    if n_samples < 1 {
        return Err(invalid("n_samples", "must be >= 1"));
    }
    let mut src = source.reseeded(rng);
    let n = src.n();
    let mut acc = DenseMatrix::zeros(n, n);
    for _ in 0..n_samples {
        let obs = src.next_observation()?;
        let g = obs.a_tilde.gram_cols();
        for (a, v) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += v;
        }
    }
    let inv = 1.0 / n_samples as f64;
    acc.as_mut_slice().iter_mut().for_each(|v| *v *= inv);
    let eig = symmetric_eigen(&acc)?;
    let cutoff = eig.rank_cutoff();
    eig.values
        .iter()
        .copied()
        .filter(|&l| l > cutoff)
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))))
        .ok_or(Error::RankDeficient)
}
