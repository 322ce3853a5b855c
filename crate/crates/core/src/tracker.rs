//! Windowed residual estimates, the `(1−α)` uncertainty interval and the stopping rule.
//!
//! The window starts at width 1 and grows to `λ₁`. The first time the sketched
//! residual increases, a flag is raised for good and the window grows on to `λ₂`.
//! `ρ̃` and `ι̃` are recomputed from the history buffer on every update.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::subexp::SubExpParams;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    lambda1: usize,
    lambda2: usize,
    lambda: usize,
    flag: bool,
    history: VecDeque<f64>,
    rho: f64,
    iota: f64,
    k: usize,
}

/// Risk configuration of the stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingParams {
    pub upsilon: f64,
    pub delta_i: f64,
    pub delta_ii: f64,
    pub xi_i: f64,
    pub xi_ii: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl StoppingParams {
    pub fn new(upsilon: f64, delta_i: f64, delta_ii: f64, xi_i: f64, xi_ii: f64, eta: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            upsilon,
            delta_i,
            delta_ii,
            xi_i,
            xi_ii,
            eta,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    /// `(υ, δ_I, δ_II, ξ_I, ξ_II) = (100, 0.9, 1.1, 0.01, 0.01)`, `η = 1`, `α = 0.05`.
    pub fn reference() -> Self {
        Self {
            upsilon: 100.0,
            delta_i: 0.9,
            delta_ii: 1.1,
            xi_i: 0.01,
            xi_ii: 0.01,
            eta: 1.0,
            alpha: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        if !(self.upsilon > 0.0 && self.upsilon.is_finite()) {
            return Err(invalid("upsilon", format!("must be > 0, got {}", self.upsilon)));
        }
        if !open01(self.delta_i) {
            return Err(invalid("delta_i", format!("must lie in (0,1), got {}", self.delta_i)));
        }
        if !(self.delta_ii > 1.0 && self.delta_ii.is_finite()) {
            return Err(invalid("delta_ii", format!("must be > 1, got {}", self.delta_ii)));
        }
        if !open01(self.xi_i) {
            return Err(invalid("xi_i", format!("must lie in (0,1), got {}", self.xi_i)));
        }
        if !open01(self.xi_ii) {
            return Err(invalid("xi_ii", format!("must lie in (0,1), got {}", self.xi_ii)));
        }
        if !(self.eta >= 1.0 && self.eta.is_finite()) {
            return Err(invalid("eta", format!("must be >= 1, got {}", self.eta)));
        }
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("must lie in (0,1), got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    SubGaussian,
    SubExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub center: f64,
    pub half_width: f64,
    pub branch: Branch,
}

impl Interval {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo() <= v && v <= self.hi()
    }
}

/// `c / d` with the convention `c/0 = ∞` for `c > 0`.
fn ratio(c: f64, d: f64) -> f64 {
    if d == 0.0 {
        f64::INFINITY
    } else {
        c / d
    }
}

/// Shared width formula. `scale` stands for `√ι̃` or `M`; `cond_div` is the
/// multiple of `ω²` in the branch condition.
fn width(scale: f64, lambda: usize, se: SubExpParams, alpha: f64, eta: f64, cond_div: f64) -> (f64, Branch) {
    let l = lambda as f64;
    let log_a = (2.0 / alpha).ln();
    let log_l = 1.0 + l.ln();
    let sig2 = se.sigma * se.sigma;
    let rhs = ratio(l * sig2 * log_l, cond_div * se.omega * se.omega);
    if log_a <= rhs {
        let hw = (2.0 * log_a * sig2 * scale * scale * log_l / (eta * l)).sqrt();
        (hw, Branch::SubGaussian)
    } else {
        let hw = 2.0 * log_a * se.omega * scale / (eta.sqrt() * l);
        (hw, Branch::SubExponential)
    }
}

impl TrackerState {
    pub fn new(lambda1: usize, lambda2: usize) -> Result<Self> {
        if lambda1 < 1 {
            return Err(invalid("lambda1", "must be >= 1"));
        }
        if lambda2 < lambda1 {
            return Err(invalid(
                "lambda2",
                format!("must be >= lambda1 = {lambda1}, got {lambda2}"),
            ));
        }
        Ok(Self {
            lambda1,
            lambda2,
            lambda: 0,
            flag: false,
            history: VecDeque::with_capacity(lambda2),
            rho: 0.0,
            iota: 0.0,
            k: 0,
        })
    }

    /// Fixed width `λ` (no adaptation).
    pub fn fixed(lambda: usize) -> Result<Self> {
        Self::new(lambda, lambda)
    }

    pub fn lambda1(&self) -> usize {
        self.lambda1
    }

    pub fn lambda2(&self) -> usize {
        self.lambda2
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn flag(&self) -> bool {
        self.flag
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The current window, oldest first.
    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().skip(self.history.len() - self.lambda).copied()
    }

    pub fn update(&mut self, r_norm_sq: f64) -> Result<()> {
        if !(r_norm_sq.is_finite() && r_norm_sq >= 0.0) {
            return Err(invalid(
                "r_norm_sq",
                format!("must be finite and >= 0, got {r_norm_sq}"),
            ));
        }
        if self.k == 0 {
            self.lambda = 1;
        } else {
            let prev = *self.history.back().expect("history nonempty after first update");
            if !self.flag && r_norm_sq > prev {
                self.flag = true;
            }
            self.lambda = match (self.flag, self.k < self.lambda1, self.lambda < self.lambda2) {
                (false, true, _) => self.k + 1,
                (false, false, _) => self.lambda1,
                (true, _, true) => self.lambda + 1,
                (true, _, false) => self.lambda2,
            };
        }
        if self.history.len() == self.lambda2 {
            self.history.pop_front();
        }
        self.history.push_back(r_norm_sq);
        self.k += 1;

        let l = self.lambda as f64;
        let (s, s2) = self.window().fold((0.0, 0.0), |(s, s2), v| (s + v, s2 + v * v));
        self.rho = s / l;
        self.iota = s2 / l;
        Ok(())
    }

    /// Plug-in `(1−α)` interval around `ρ̃`.
    pub fn interval(&self, se: SubExpParams, alpha: f64, eta: f64) -> Result<Interval> {
        if self.k == 0 {
            return Err(invalid("tracker", "interval needs at least one update"));
        }
        plug_in_interval(self.rho, self.iota, self.lambda, se, alpha, eta)
    }

    /// Minimum of the four stopping terms at the current `λ` and `ι̃`.
    pub fn stop_threshold(&self, params: &StoppingParams, se: SubExpParams) -> f64 {
        let l = self.lambda.max(1) as f64;
        let log_l = 1.0 + l.ln();
        let sig2 = se.sigma * se.sigma;
        let root_iota = self.iota.sqrt();
        let le = l * params.eta;
        let u = params.upsilon;
        let (d1, d2) = (1.0 - params.delta_i, params.delta_ii - 1.0);
        let (g1, g2) = ((1.0 / params.xi_i).ln(), (1.0 / params.xi_ii).ln());
        let t1 = ratio(le * d1 * d1 * u * u, 2.0 * g1 * sig2 * root_iota * log_l);
        let t2 = ratio(le * u * d1, 2.0 * g1 * se.omega);
        let t3 = ratio(le * d2 * d2 * u * u, 2.0 * g2 * sig2 * root_iota * log_l);
        let t4 = ratio(le * u * d2, 2.0 * g2 * se.omega);
        t1.min(t2).min(t3).min(t4)
    }

    pub fn should_stop(&self, params: &StoppingParams, se: SubExpParams) -> bool {
        self.k >= 1 && self.rho < params.upsilon && self.iota.sqrt() < self.stop_threshold(params, se)
    }
}

/// The interval of [`TrackerState::interval`] from window statistics `(ρ̃, ι̃, λ)`.
pub fn plug_in_interval(
    rho: f64,
    iota: f64,
    lambda: usize,
    se: SubExpParams,
    alpha: f64,
    eta: f64,
) -> Result<Interval> {
    check_alpha(alpha)?;
    if !(eta >= 1.0) {
        return Err(invalid("eta", format!("must be >= 1, got {eta}")));
    }
    if lambda < 1 {
        return Err(invalid("lambda", "must be >= 1"));
    }
    if !(iota >= 0.0) {
        return Err(invalid("iota", format!("must be >= 0, got {iota}")));
    }
    let (half_width, branch) = width(iota.sqrt(), lambda, se, alpha, eta, 2.0);
    Ok(Interval {
        center: rho,
        half_width,
        branch,
    })
}

/// Interval of the same level with a known scale `M` in place of `√ι̃`; the
/// branch condition compares against `λσ²(1+ln λ)/ω²`.
pub fn oracle_interval(center: f64, m: f64, lambda: usize, se: SubExpParams, alpha: f64) -> Result<Interval> {
    check_alpha(alpha)?;
    if !(m >= 0.0 && m.is_finite()) {
        return Err(invalid("M", format!("must be finite and >= 0, got {m}")));
    }
    if lambda < 1 {
        return Err(invalid("lambda", "must be >= 1"));
    }
    let (half_width, branch) = width(m, lambda, se, alpha, 1.0, 1.0);
    Ok(Interval {
        center,
        half_width,
        branch,
    })
}

/// Probability bound on `|(M² − ι̃)/M²| > 1 + δ`, capped at 1.
pub fn iota_vs_m_bound(delta: f64, lambda: usize, sigma: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("must be > 0, got {delta}")));
    }
    if lambda < 1 {
        return Err(invalid("lambda", "must be >= 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be > 0, got {sigma}")));
    }
    let l = lambda as f64;
    let log_l = 1.0 + l.ln();
    let d2l = delta * delta * l;
    let inner = 2.0 + (d2l / log_l).powf(0.25);
    let expo = d2l / (2.0 * sigma * sigma * inner * inner * log_l);
    Ok(((1.0 + l) * (-expo).exp()).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn se(sigma: f64, omega: f64) -> SubExpParams {
        SubExpParams::new(sigma, omega).unwrap()
    }

    fn fed(l1: usize, l2: usize, xs: &[f64]) -> TrackerState {
        let mut t = TrackerState::new(l1, l2).unwrap();
        for &x in xs {
            t.update(x).unwrap();
        }
        t
    }

    /// Tracker with given `λ` and `ι̃` (constant inputs `√ι̃`).
    fn with_window(lambda: usize, iota: f64) -> TrackerState {
        fed(lambda, lambda, &vec![iota.sqrt(); lambda])
    }

    #[test]
    fn first_update() {
        let t = fed(3, 5, &[4.0]);
        assert_eq!((t.rho(), t.iota(), t.lambda()), (4.0, 16.0, 1));
    }

    #[test]
    fn flag_then_growth() {
        let t = fed(2, 4, &[9.0, 4.0, 5.0]);
        assert!(t.flag());
        assert_eq!(t.lambda(), 3);
        assert_relative_eq!(t.rho(), 6.0, max_relative = 1e-15);
        assert_relative_eq!(t.iota(), 122.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn sliding_width_one() {
        let t = fed(1, 5, &[9.0, 4.0, 1.0]);
        assert!(!t.flag());
        assert_eq!((t.rho(), t.iota(), t.lambda()), (1.0, 1.0, 1));
    }

    #[test]
    fn sliding_at_lambda2() {
        let t = fed(1, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(t.lambda(), 3);
        assert_relative_eq!(t.rho(), 5.0);
    }

    #[test]
    fn rejects_bad_input() {
        let mut t = TrackerState::new(1, 2).unwrap();
        assert!(t.update(-1.0).is_err());
        assert!(t.update(f64::NAN).is_err());
        assert!(TrackerState::new(0, 2).is_err());
        assert!(TrackerState::new(3, 2).is_err());
    }

    #[test]
    fn interval_examples() {
        let t = with_window(4, 1.0);
        let iv = t.interval(se(1.0, 0.0), 0.05, 1.0).unwrap();
        assert_eq!(iv.branch, Branch::SubGaussian);
        let want = (2.0 * 40f64.ln() * (1.0 + 4f64.ln()) / 4.0).sqrt();
        assert_relative_eq!(iv.half_width, want, max_relative = 1e-14);
        assert_relative_eq!(iv.half_width, 2.097_945_7, max_relative = 1e-7);

        let t = with_window(1, 2.25);
        let iv = t.interval(se(0.01, 1.0), 0.05, 1.0).unwrap();
        assert_eq!(iv.branch, Branch::SubExponential);
        assert_relative_eq!(iv.half_width, 2.0 * 40f64.ln() * 1.5, max_relative = 1e-14);

        let t = fed(2, 2, &[0.0, 0.0]);
        assert_eq!(t.interval(se(1.0, 1.0), 0.05, 1.0).unwrap().half_width, 0.0);
        assert!(t.interval(se(1.0, 1.0), 1.5, 1.0).is_err());
        assert!(TrackerState::new(1, 1)
            .unwrap()
            .interval(se(1.0, 0.0), 0.05, 1.0)
            .is_err());
    }

    #[test]
    fn sigma_zero_forces_subexponential() {
        let t = with_window(10, 3.0);
        assert_eq!(
            t.interval(se(0.0, 0.5), 0.05, 1.0).unwrap().branch,
            Branch::SubExponential
        );
    }

    #[test]
    fn threshold_examples() {
        let t = with_window(1, 1.0);
        let mut p = StoppingParams::reference();
        let th = t.stop_threshold(&p, se(1.0, 0.0));
        assert_relative_eq!(th, 100.0 / (2.0 * 100f64.ln()), max_relative = 1e-14);
        assert_relative_eq!(th, 10.857_362_047_581_296, max_relative = 1e-12);
        p.xi_ii = 1e-4;
        assert_relative_eq!(t.stop_threshold(&p, se(1.0, 0.0)), th / 2.0, max_relative = 1e-14);

        let z = fed(1, 1, &[0.0]);
        assert_eq!(
            z.stop_threshold(&StoppingParams::reference(), se(1.0, 0.0)),
            f64::INFINITY
        );
    }

    #[test]
    fn threshold_matches_squared_form() {
        // √ι̃ < ληc/(2 ln(1/ξ) σ² √ι̃ (1+ln λ)) ⇔ ι̃ < ληc/(2 ln(1/ξ) σ² (1+ln λ))
        let p = StoppingParams::reference();
        for (lambda, iota) in [(3, 0.5), (15, 2.0), (50, 1e-3)] {
            let t = with_window(lambda, iota);
            let l = lambda as f64;
            let crit = l * 0.01 * 1e4 / (2.0 * 100f64.ln() * 0.04 * (1.0 + l.ln()));
            assert_eq!(t.should_stop(&p, se(0.2, 0.0)), iota < crit);
        }
    }

    #[test]
    fn stop_examples() {
        let p = StoppingParams::reference();
        assert!(!TrackerState::new(1, 1).unwrap().should_stop(&p, se(1.0, 0.0)));
        // ρ̃ = 50, ι̃ = 2500 would exceed the threshold; use a window with ι̃ = 1 and ρ̃ < υ
        let t = with_window(1, 1.0);
        assert!(t.should_stop(&p, se(1.0, 0.0)));
        let big = fed(1, 1, &[200.0]);
        assert!(!big.should_stop(&p, se(0.0, 0.0)));
    }

    #[test]
    fn oracle_examples() {
        let iv = oracle_interval(0.0, 2.0, 1, se(1.0, 0.0), 0.05).unwrap();
        assert_relative_eq!(iv.half_width, (8.0 * 40f64.ln()).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(iv.half_width, 5.432_406, max_relative = 1e-6);
        assert_eq!(
            oracle_interval(1.0, 0.0, 3, se(1.0, 1.0), 0.05).unwrap().half_width,
            0.0
        );
        assert!(oracle_interval(0.0, -1.0, 1, se(1.0, 0.0), 0.05).is_err());
        assert!(oracle_interval(0.0, 1.0, 0, se(1.0, 0.0), 0.05).is_err());
    }

    #[test]
    fn condition_factor_differs_between_plug_in_and_oracle() {
        // ln 40 ≈ 3.689 lies between λσ²(1+ln λ)/(2ω²) = 2 and λσ²(1+ln λ)/ω² = 4
        let s = se(2.0, 1.0);
        let t = with_window(1, 1.0);
        assert_eq!(t.interval(s, 0.05, 1.0).unwrap().branch, Branch::SubExponential);
        assert_eq!(
            oracle_interval(0.0, 1.0, 1, s, 0.05).unwrap().branch,
            Branch::SubGaussian
        );
    }

    #[test]
    fn iota_bound_examples() {
        assert_eq!(iota_vs_m_bound(1.0, 1, 1.0).unwrap(), 1.0);
        let raw = 2.0 * (-1.0f64 / 18.0).exp();
        assert!(raw > 1.0);
        assert_relative_eq!(raw, 1.891_918_937_813_530_8, max_relative = 1e-12);
        let mut prev = 1.0;
        for i in 1..200 {
            let b = iota_vs_m_bound(i as f64 * 0.5, 15, 0.4).unwrap();
            assert!(b <= prev);
            prev = b;
        }
        assert!(prev < 1e-6);
        assert!(iota_vs_m_bound(0.0, 1, 1.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(StoppingParams::new(100.0, 0.9, 1.1, 0.01, 0.01, 1.0, 0.05).is_ok());
        assert!(StoppingParams::new(100.0, 1.0, 1.1, 0.01, 0.01, 1.0, 0.05).is_err());
        assert!(StoppingParams::new(100.0, 0.9, 1.0, 0.01, 0.01, 1.0, 0.05).is_err());
        assert!(StoppingParams::new(0.0, 0.9, 1.1, 0.01, 0.01, 1.0, 0.05).is_err());
        assert!(StoppingParams::new(100.0, 0.9, 1.1, 0.01, 0.01, 0.5, 0.05).is_err());
        assert!(StoppingParams::new(100.0, 0.9, 1.1, 0.01, 0.01, 1.0, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn means_match_window(l1 in 1usize..6, extra in 0usize..6, xs in proptest::collection::vec(0.0f64..100.0, 1..60)) {
            let l2 = l1 + extra;
            let mut t = TrackerState::new(l1, l2).unwrap();
            let mut was_flagged = false;
            let mut prev_lambda = 0;
            for (i, &x) in xs.iter().enumerate() {
                t.update(x).unwrap();
                let lam = t.lambda();
                prop_assert!(lam >= 1 && lam <= l2);
                if !t.flag() { prop_assert!(lam <= l1); }
                if was_flagged { prop_assert!(t.flag()); prop_assert!(lam >= prev_lambda); }
                let w = &xs[i + 1 - lam..=i];
                let rho = w.iter().sum::<f64>() / lam as f64;
                let iota = w.iter().map(|v| v * v).sum::<f64>() / lam as f64;
                prop_assert!((t.rho() - rho).abs() <= 1e-12 * rho.max(1e-300));
                prop_assert!((t.iota() - iota).abs() <= 1e-12 * iota.max(1e-300));
                was_flagged = t.flag();
                prev_lambda = lam;
            }
        }

        #[test]
        fn eta_scales_width(lambda in 1usize..40, iota in 0.01f64..10.0, sigma in 0.0f64..3.0, omega in 0.0f64..3.0) {
            prop_assume!(sigma > 0.0 || omega > 0.0);
            let t = with_window(lambda, iota);
            let s = se(sigma, omega);
            let w1 = t.interval(s, 0.05, 1.0).unwrap().half_width;
            let w2 = t.interval(s, 0.05, 2.0).unwrap().half_width;
            prop_assert!((w2 - w1 / 2f64.sqrt()).abs() <= 1e-12 * w1.max(1e-300));
        }

        #[test]
        fn stop_is_monotone(rho_scale in 0.1f64..2.0, lambda in 1usize..20) {
            let p = StoppingParams::reference();
            let s = se(0.4, 0.1);
            let hi = with_window(lambda, (90.0 * rho_scale).powi(2));
            let lo = with_window(lambda, (45.0 * rho_scale).powi(2));
            if hi.should_stop(&p, s) { prop_assert!(lo.should_stop(&p, s)); }
        }
    }
}
