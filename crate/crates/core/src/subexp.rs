//! Sub-Exponential parameter calculus.
//!
//! A centered variable `Y − μ` is `SE(σ, ω)` when both tails are bounded by
//! `exp(−min{δ²/(2σ²), δ/(2ω)})`. A zero parameter removes its term from the
//! minimum (`c/0 = ∞`), so `ω = 0` is the sub-Gaussian case.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubExpParams {
    pub sigma: f64,
    pub omega: f64,
}

impl SubExpParams {
    pub fn new(sigma: f64, omega: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
        }
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(invalid("omega", format!("must be finite and >= 0, got {omega}")));
        }
        Ok(Self { sigma, omega })
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma == 0.0 && self.omega == 0.0
    }
}

/// Sketch families with tabulated constants, plus uniform row subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SketchMethod {
    Gaussian,
    Achlioptas,
    Fjlt,
    RowSubset,
}

impl SketchMethod {
    pub const JL: [SketchMethod; 3] = [SketchMethod::Gaussian, SketchMethod::Achlioptas, SketchMethod::Fjlt];

    pub fn name(&self) -> &'static str {
        match self {
            SketchMethod::Gaussian => "gaussian",
            SketchMethod::Achlioptas => "achlioptas",
            SketchMethod::Fjlt => "fjlt",
            SketchMethod::RowSubset => "rowsubset",
        }
    }
}

impl fmt::Display for SketchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SketchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "gaussian" => Ok(SketchMethod::Gaussian),
            "achlioptas" => Ok(SketchMethod::Achlioptas),
            "fjlt" | "srht" => Ok(SketchMethod::Fjlt),
            "rowsubset" | "subset" => Ok(SketchMethod::RowSubset),
            _ => Err(Error::Unknown {
                kind: "sketch method",
                name: s.to_string(),
            }),
        }
    }
}

/// `max{P(Y−μ > δ), P(Y−μ < −δ)}` bound for `SE(σ, ω)`.
pub fn tail_bound(params: SubExpParams, delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(invalid("delta", format!("must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(1.0);
    }
    let quad = if params.sigma > 0.0 {
        delta * delta / (2.0 * params.sigma * params.sigma)
    } else {
        f64::INFINITY
    };
    let lin = if params.omega > 0.0 {
        delta / (2.0 * params.omega)
    } else {
        f64::INFINITY
    };
    Ok((-quad.min(lin)).exp())
}

/// Parameters of `c1 (Y − μ)` for any `c2 ≥ |c1| > 0`.
pub fn scale(params: SubExpParams, c1: f64, c2: f64) -> Result<SubExpParams> {
    if c1 == 0.0 || !c1.is_finite() {
        return Err(invalid("c1", "must be finite and nonzero"));
    }
    if !(c2 >= c1.abs()) || !c2.is_finite() {
        return Err(invalid("c2", format!("must be >= |c1| = {}, got {c2}", c1.abs())));
    }
    SubExpParams::new(c2 * params.sigma, c2 * params.omega)
}

/// A relative error supported on `[y1, y2]` is `SE((y2 − y1)/2, 0)`.
pub fn from_bounded(y1: f64, y2: f64) -> Result<SubExpParams> {
    if !(y2 >= y1) {
        return Err(invalid("y2", format!("must be >= y1 = {y1}, got {y2}")));
    }
    SubExpParams::new((y2 - y1) / 2.0, 0.0)
}

/// Tabulated `(C, ω)` of the JL tail `exp(−min{Cpδ²/2, δ/(2ω)})`.
pub fn jl_constants(method: SketchMethod) -> Result<(f64, f64)> {
    match method {
        SketchMethod::Gaussian => Ok((0.23467, 0.1127)),
        SketchMethod::Achlioptas => Ok((0.23467, 0.1127)),
        SketchMethod::Fjlt => Ok((0.03125, 0.0625)),
        SketchMethod::RowSubset => Err(invalid(
            "method",
            "row subsets have no JL constants; use row_subset_params",
        )),
    }
}

/// `SE(√(1/(Cp)), ω)` for a JL sketch with embedding dimension `p`.
pub fn se_from_jl(method: SketchMethod, p: usize) -> Result<SubExpParams> {
    if p < 1 {
        return Err(invalid("p", "embedding dimension must be >= 1"));
    }
    let (c, omega) = jl_constants(method)?;
    SubExpParams::new((1.0 / (c * p as f64)).sqrt(), omega)
}

/// `SE(m/(2p), 0)` for uniform `p`-row subsets of an `m`-row system.
pub fn row_subset_params(m: usize, p: usize) -> Result<SubExpParams> {
    if p < 1 || p > m {
        return Err(invalid("p", format!("must satisfy 1 <= p <= m = {m}, got {p}")));
    }
    SubExpParams::new(m as f64 / (2.0 * p as f64), 0.0)
}

/// `D = 9N / σ_min` and `SE(D/2, 0)` for the random-coordinate collocation stream.
pub fn collocation_params(n_cols: usize, sigma_min_est: f64) -> Result<(f64, SubExpParams)> {
    if n_cols < 1 {
        return Err(invalid("N", "column count must be >= 1"));
    }
    if !(sigma_min_est > 0.0) || !sigma_min_est.is_finite() {
        return Err(invalid("sigma_min_est", format!("must be > 0, got {sigma_min_est}")));
    }
    let d = 9.0 * n_cols as f64 / sigma_min_est;
    Ok((d, SubExpParams::new(d / 2.0, 0.0)?))
}

/// Conservative contraction `η` per sketch family (1 when none is tabulated).
pub fn default_eta(method: SketchMethod) -> f64 {
    match method {
        SketchMethod::Achlioptas => 26.0,
        SketchMethod::Fjlt => 188.0,
        SketchMethod::Gaussian => 26.0,
        SketchMethod::RowSubset => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub delta: f64,
    pub upper_freq: f64,
    pub lower_freq: f64,
    pub bound: f64,
    pub slack: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub n_samples: usize,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    pub fn any_violation(&self) -> bool {
        self.rows.iter().any(|r| r.violated)
    }
}

/// Monte-Carlo slack `3·√(b(1−b)/n) + 1/n`.
pub fn monte_carlo_slack(bound: f64, n: usize) -> f64 {
    let n = n as f64;
    3.0 * (bound * (1.0 - bound) / n).sqrt() + 1.0 / n
}

/// Compares empirical two-sided tail frequencies of centered `samples` with
/// `tail_bound(params, δ)` on each grid point. `slack = None` uses
/// [`monte_carlo_slack`] per grid point.
pub fn empirical_tail_check(
    samples: &[f64],
    params: SubExpParams,
    delta_grid: &[f64],
    slack: Option<f64>,
) -> Result<TailReport> {
    if samples.is_empty() {
        return Err(Error::Empty("tail-check samples"));
    }
    if let Some(s) = slack {
        if !(s >= 0.0) {
            return Err(invalid("slack", "must be >= 0"));
        }
    }
    let n = samples.len();
    let mut rows = Vec::with_capacity(delta_grid.len());
    for &delta in delta_grid {
        if !(delta > 0.0) {
            return Err(invalid("delta", format!("grid values must be > 0, got {delta}")));
        }
        let upper = samples.iter().filter(|&&s| s > delta).count() as f64 / n as f64;
        let lower = samples.iter().filter(|&&s| s < -delta).count() as f64 / n as f64;
        let bound = tail_bound(params, delta)?;
        let slack = slack.unwrap_or_else(|| monte_carlo_slack(bound, n));
        rows.push(TailRow {
            delta,
            upper_freq: upper,
            lower_freq: lower,
            bound,
            slack,
            violated: upper.max(lower) > bound + slack,
        });
    }
    Ok(TailReport { n_samples: n, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn se(s: f64, w: f64) -> SubExpParams {
        SubExpParams::new(s, w).unwrap()
    }

    #[test]
    fn tail_bound_examples() {
        assert_relative_eq!(
            tail_bound(se(1.0, 0.0), 2.0).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-15
        );
        assert_eq!(tail_bound(se(3.0, 0.7), 0.0).unwrap(), 1.0);
        // linear branch: min(8, 2)
        assert_relative_eq!(
            tail_bound(se(1.0, 1.0), 4.0).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-15
        );
        assert_eq!(tail_bound(se(0.0, 0.0), 0.5).unwrap(), 0.0);
        assert!(tail_bound(se(1.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn scale_examples() {
        assert_eq!(scale(se(1.0, 0.5), 1.0, 1.0).unwrap(), se(1.0, 0.5));
        assert_eq!(scale(se(2.0, 0.0), 1.0, 3.0).unwrap(), se(6.0, 0.0));
        let s = scale(se(0.5, 0.1), -2.0, 2.0).unwrap();
        assert_relative_eq!(s.sigma, 1.0);
        assert_relative_eq!(s.omega, 0.2);
        assert!(scale(se(1.0, 1.0), 2.0, 1.0).is_err());
        assert!(scale(se(1.0, 1.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn bounded_examples() {
        assert_eq!(from_bounded(-1.0, 1.0).unwrap(), se(1.0, 0.0));
        assert_eq!(from_bounded(0.0, 0.0).unwrap(), se(0.0, 0.0));
        let p = from_bounded(-1.0, (512.0 - 25.0) / 25.0).unwrap();
        assert_relative_eq!(p.sigma, 10.24, max_relative = 1e-14);
        assert_eq!(p.omega, 0.0);
        assert!(from_bounded(1.0, 0.0).is_err());
    }

    #[test]
    fn jl_table_is_exact() {
        assert_eq!(jl_constants(SketchMethod::Gaussian).unwrap(), (0.23467, 0.1127));
        assert_eq!(jl_constants(SketchMethod::Achlioptas).unwrap(), (0.23467, 0.1127));
        assert_eq!(jl_constants(SketchMethod::Fjlt).unwrap(), (0.03125, 0.0625));
        assert!(jl_constants(SketchMethod::RowSubset).is_err());
    }

    #[test]
    fn se_from_jl_examples() {
        let g = se_from_jl(SketchMethod::Gaussian, 25).unwrap();
        assert_relative_eq!(g.sigma, 0.412_858_479_699_277, max_relative = 1e-12);
        assert_eq!(g.omega, 0.1127);
        let f = se_from_jl(SketchMethod::Fjlt, 32).unwrap();
        assert_eq!(f.sigma, 1.0);
        assert_eq!(f.omega, 0.0625);
        assert_relative_eq!(
            se_from_jl(SketchMethod::Gaussian, 1).unwrap().sigma,
            2.064_292_398_496_387,
            max_relative = 1e-12
        );
        assert!(se_from_jl(SketchMethod::Gaussian, 0).is_err());
    }

    #[test]
    fn row_subset_examples() {
        assert_relative_eq!(row_subset_params(512, 25).unwrap().sigma, 10.24, max_relative = 1e-14);
        assert_eq!(row_subset_params(7, 7).unwrap(), se(0.5, 0.0));
        assert_eq!(row_subset_params(100, 10).unwrap(), se(5.0, 0.0));
        assert!(row_subset_params(5, 6).is_err());
        assert!(row_subset_params(5, 0).is_err());
    }

    #[test]
    fn collocation_examples() {
        let (d, p) = collocation_params(8, 2.0).unwrap();
        assert_eq!(d, 36.0);
        assert_eq!(p, se(18.0, 0.0));
        let (d, p) = collocation_params(1, 9.0).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(p, se(0.5, 0.0));
        let (d, _) = collocation_params(125, 0.001).unwrap();
        assert_relative_eq!(d, 1_125_000.0, max_relative = 1e-12);
        assert!(collocation_params(8, 0.0).is_err());
    }

    #[test]
    fn tail_check_examples() {
        let zeros = vec![0.0; 100];
        let r = empirical_tail_check(&zeros, se(1.0, 0.0), &[1.0], None).unwrap();
        assert!(!r.any_violation());
        assert_eq!(r.rows[0].upper_freq, 0.0);

        let spikes: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 10.0 } else { -10.0 }).collect();
        let r = empirical_tail_check(&spikes, se(0.1, 0.0), &[1.0], None).unwrap();
        assert!(r.any_violation());
        assert_eq!(r.rows[0].upper_freq, 0.5);

        assert!(empirical_tail_check(&[], se(1.0, 0.0), &[1.0], None).is_err());
        assert!(empirical_tail_check(&[0.0], se(1.0, 0.0), &[0.0], None).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            SketchMethod::Gaussian,
            SketchMethod::Achlioptas,
            SketchMethod::Fjlt,
            SketchMethod::RowSubset,
        ] {
            assert_eq!(m.name().parse::<SketchMethod>().unwrap(), m);
        }
        assert!("nope".parse::<SketchMethod>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tail_bound_non_increasing(s in 0.0f64..5.0, w in 0.0f64..5.0, d1 in 0.0f64..20.0, d2 in 0.0f64..20.0) {
                let p = se(s, w);
                let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
                prop_assert!(tail_bound(p, hi).unwrap() <= tail_bound(p, lo).unwrap());
            }

            #[test]
            fn scale_round_trip(s in 0.0f64..10.0, w in 0.0f64..10.0, c in 0.01f64..100.0) {
                let p = se(s, w);
                let back = scale(scale(p, c, c).unwrap(), 1.0 / c, 1.0 / c).unwrap();
                prop_assert!((back.sigma - s).abs() <= 1e-12 * s.max(1.0));
                prop_assert!((back.omega - w).abs() <= 1e-12 * w.max(1.0));
            }

            #[test]
            fn bounded_has_zero_omega(a in -100.0f64..100.0, w in 0.0f64..100.0) {
                prop_assert_eq!(from_bounded(a, a + w).unwrap().omega, 0.0);
            }
        }
    }
}
