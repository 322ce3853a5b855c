//! Stopping-error rates against the exact moving average, and `ι̃` against `M²`.

use std::sync::Arc;

use serde::Serialize;

use super::{estimate_sketch_norm_factor, run_tracked_solve, RunOptions, RunTrace};
use crate::error::{invalid, Error, Result};
use crate::numerics::{sub, InnerProduct, RngHandle, Vector};
use crate::streams::StreamSource;
use crate::tracker::{iota_vs_m_bound, StoppingParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingRun {
    pub n_iters: usize,
    /// Iterations where `√ι̃` is below the stopping threshold.
    pub n_eligible: usize,
    /// Eligible iterations with `ρ̃ > υ` and `ρ ≤ δ_I·υ`.
    pub late: usize,
    /// Eligible iterations with `ρ̃ ≤ υ` and `ρ > δ_II·υ`.
    pub early: usize,
    pub first_stop: Option<usize>,
    pub late_rate: f64,
    pub early_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingReport {
    pub params: StoppingParams,
    pub runs: Vec<StoppingRun>,
    pub n_eligible: usize,
    pub late: usize,
    pub early: usize,
    pub late_rate: f64,
    pub early_rate: f64,
}

fn rate(count: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        count as f64 / n as f64
    }
}

impl StoppingReport {
    pub fn from_runs(params: StoppingParams, runs: Vec<StoppingRun>) -> Self {
        let n_eligible = runs.iter().map(|r| r.n_eligible).sum();
        let late = runs.iter().map(|r| r.late).sum();
        let early = runs.iter().map(|r| r.early).sum();
        Self {
            params,
            runs,
            n_eligible,
            late,
            early,
            late_rate: rate(late, n_eligible),
            early_rate: rate(early, n_eligible),
        }
    }
}

/// Counts both stopping-error events over a run of `opts.max_iters` iterations
/// (the run continues past the first stop). Needs a source with a known system.
pub fn stopping_error_rates(
    source: &StreamSource,
    x0: Vector,
    inner: Arc<InnerProduct>,
    opts: &RunOptions,
    rng: RngHandle,
) -> Result<(StoppingRun, RunTrace)> {
    let scale = source
        .expectation_scale()
        .ok_or(Error::MissingGroundTruth("stopping_error_rates"))?;
    let mut opts = opts.clone();
    opts.run_to_max = true;
    let mut src = source.reseeded(rng);
    let se = src.se_params();
    let trace = run_tracked_solve(&mut src, x0, inner, se, &opts)?;
    let rho = trace
        .exact_rho(scale)
        .ok_or(Error::MissingGroundTruth("stopping_error_rates"))?;
    let p = &opts.stopping;
    let (mut n_eligible, mut late, mut early) = (0, 0, 0);
    for (rec, &truth) in trace.records.iter().zip(&rho) {
        if rec.iota.sqrt() >= rec.threshold {
            continue;
        }
        n_eligible += 1;
        if rec.rho > p.upsilon && truth <= p.delta_i * p.upsilon {
            late += 1;
        }
        if rec.rho <= p.upsilon && truth > p.delta_ii * p.upsilon {
            early += 1;
        }
    }
    let run = StoppingRun {
        n_iters: trace.records.len(),
        n_eligible,
        late,
        early,
        first_stop: trace.stop_iteration,
        late_rate: rate(late, n_eligible),
        early_rate: rate(early, n_eligible),
    };
    Ok((run, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IotaCheckRow {
    pub k: usize,
    pub m_sq: f64,
    pub iota: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IotaCheckReport {
    pub delta: f64,
    pub lambda: usize,
    /// Monte-Carlo `E‖Ã B^{-1/2}‖₂²`.
    pub norm_factor: f64,
    pub rows: Vec<IotaCheckRow>,
    pub exceedances: usize,
    pub exceedance_freq: f64,
    pub bound: f64,
}

/// Compares `ι̃_k` with `M²_{k−λ}` on records whose window has width `λ`.
/// The trace must carry iterates (`save_iterates`). Rows with `M = 0` are skipped,
/// where an error below `1e-12·‖x*‖_B` counts as zero.
pub fn iota_m_relative_check(
    trace: &RunTrace,
    source: &StreamSource,
    inner: &InnerProduct,
    delta: f64,
    n_samples: usize,
    rng: RngHandle,
) -> Result<IotaCheckReport> {
    let xs = source
        .x_star()
        .ok_or(Error::MissingGroundTruth("iota_m_relative_check"))?;
    let lambda = trace.options.lambda2;
    let bound = iota_vs_m_bound(delta, lambda, source.se_params().sigma)?;
    let c = estimate_sketch_norm_factor(source, inner, n_samples, rng)?;
    let zero = 1e-12 * inner.norm(xs)?;
    let mut rows = Vec::new();
    for (i, rec) in trace.records.iter().enumerate() {
        if rec.lambda != lambda || i < lambda {
            continue;
        }
        let x_ref = trace.records[i - lambda]
            .x
            .as_ref()
            .ok_or_else(|| invalid("trace", "iterates were not saved"))?;
        let e = inner.norm(&sub(x_ref, xs))?;
        if e <= zero {
            continue;
        }
        let m = c * e * e;
        let m_sq = m * m;
        rows.push(IotaCheckRow {
            k: rec.k,
            m_sq,
            iota: rec.iota,
            rel_error: (m_sq - rec.iota).abs() / m_sq,
        });
    }
    let exceedances = rows.iter().filter(|r| r.rel_error > 1.0 + delta).count();
    Ok(IotaCheckReport {
        delta,
        lambda,
        norm_factor: c,
        exceedance_freq: rate(exceedances, rows.len()),
        exceedances,
        rows,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SystemConfig;
    use crate::streams::DepotMatrix;
    use crate::subexp::SketchMethod;

    #[test]
    fn huge_threshold_never_late() {
        let cfg = SystemConfig {
            generator: DepotMatrix::RandUniform,
            n: 16,
            method: SketchMethod::Gaussian,
            p: 5,
        };
        let src = cfg.build(RngHandle::new(1)).unwrap();
        let mut stop = StoppingParams::reference();
        stop.upsilon = 1e12;
        let opts = RunOptions::new(3, 3, 60, stop).unwrap();
        let (run, trace) = stopping_error_rates(
            &src,
            Vector::zeros(16),
            Arc::new(InnerProduct::Identity),
            &opts,
            RngHandle::new(2),
        )
        .unwrap();
        assert_eq!(trace.records.len(), 60);
        assert_eq!(run.late, 0);
        assert_eq!(run.early, 0);
    }

    #[test]
    fn deterministic_iota_never_exceeds() {
        // full row subsets of an orthogonal matrix: ‖r̃‖² = ‖x − x*‖² = M exactly, so ι̃ relates to M² directly
        let cfg = SystemConfig {
            generator: DepotMatrix::Rohess,
            n: 10,
            method: SketchMethod::RowSubset,
            p: 10,
        };
        let src = cfg.build(RngHandle::new(3)).unwrap();
        let mut opts = RunOptions::new(2, 2, 6, StoppingParams::reference()).unwrap();
        opts.save_iterates = true;
        opts.run_to_max = true;
        let mut s = src.reseeded(RngHandle::new(4));
        let tr = run_tracked_solve(
            &mut s,
            Vector::zeros(10),
            Arc::new(InnerProduct::Identity),
            src.se_params(),
            &opts,
        )
        .unwrap();
        let rep = iota_m_relative_check(&tr, &src, &InnerProduct::Identity, 1.0, 3, RngHandle::new(5)).unwrap();
        assert_eq!(rep.exceedances, 0);
        assert!(rep.rows.iter().all(|r| r.rel_error <= 1.0));
        assert!(rep.rows.iter().all(|r| r.k <= 3));
    }
}
