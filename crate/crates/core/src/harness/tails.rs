//! Relative errors of sketched squared norms against their `SE` tail bounds.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::numerics::{norm_sq, RngHandle};
use crate::sketch::SketchOperator;
use crate::subexp::{empirical_tail_check, row_subset_params, se_from_jl, SketchMethod, SubExpParams, TailReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub method: SketchMethod,
    pub m: usize,
    pub p: usize,
    pub params: SubExpParams,
    pub min_sample: f64,
    pub max_sample: f64,
    /// Support `[−1, m/p − 1]` of row-subset relative errors.
    pub support: Option<(f64, f64)>,
    pub outside_support: usize,
    pub report: TailReport,
}

impl TailCheck {
    pub fn passed(&self) -> bool {
        self.outside_support == 0 && !self.report.any_violation()
    }
}

/// `(‖Sᵀx‖²·c − ‖x‖²)/‖x‖²` for `n` fresh sketches of one Uniform(0,1) vector,
/// where `c = m/p` for row subsets and 1 otherwise.
pub fn sketch_relative_errors(method: SketchMethod, m: usize, p: usize, n: usize, rng: RngHandle) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(invalid("samples", "must be >= 1"));
    }
    let mut r = rng.derive(0).rng();
    let x: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
    let x2 = norm_sq(&x);
    let c = if method == SketchMethod::RowSubset {
        m as f64 / p as f64
    } else {
        1.0
    };
    let mut r = rng.derive(1).rng();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let s = SketchOperator::draw(method, m, p, &mut r)?;
        out.push((c * norm_sq(&s.apply_vec(&x)?) - x2) / x2);
    }
    Ok(out)
}

/// Draws `n` relative errors and checks them against the method's `SE`
/// parameters at each `δ` of `grid`, with the default Monte-Carlo slack.
pub fn sketch_tail_check(
    method: SketchMethod,
    m: usize,
    p: usize,
    n: usize,
    grid: &[f64],
    rng: RngHandle,
) -> Result<TailCheck> {
    let params = match method {
        SketchMethod::RowSubset => row_subset_params(m, p)?,
        _ => se_from_jl(method, p)?,
    };
    let samples = sketch_relative_errors(method, m, p, n, rng)?;
    let support = (method == SketchMethod::RowSubset).then(|| (-1.0, m as f64 / p as f64 - 1.0));
    let outside_support = support.map_or(0, |(lo, hi)| samples.iter().filter(|&&s| s < lo || s > hi).count());
    let report = empirical_tail_check(&samples, params, grid, None)?;
    Ok(TailCheck {
        method,
        m,
        p,
        params,
        min_sample: samples.iter().copied().fold(f64::INFINITY, f64::min),
        max_sample: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        support,
        outside_support,
        report,
    })
}
