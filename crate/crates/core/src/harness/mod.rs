//! The tracked solve loop and the validation experiments built on it.

mod collocation;
mod coverage;
mod stopping;
mod tails;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use collocation::{collocation_experiment, CollocationConfig, CollocationReport, CollocationRow};
pub use coverage::{
    consistency_from_coverage, consistency_from_traces, consistency_report, two_stage_coverage, ConsistencyCell,
    ConsistencyReport, CoverageConfig, CoverageReport, CoverageRow, EtaCoverage,
};
pub use stopping::{
    iota_m_relative_check, stopping_error_rates, IotaCheckReport, IotaCheckRow, StoppingReport, StoppingRun,
};
pub use tails::{sketch_relative_errors, sketch_tail_check, TailCheck};

use crate::error::{invalid, Error, Result};
use crate::numerics::{squared_spectral_norm, sub, InnerProduct, RngHandle, Vector};
use crate::solver::SolverState;
use crate::streams::{depot_matrix, sketched_system_stream, DepotMatrix, StreamSource};
use crate::subexp::{SketchMethod, SubExpParams};
use crate::tracker::{StoppingParams, TrackerState};

/// One iteration of the tracked solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub k: usize,
    pub lambda: usize,
    /// `‖r̃_k‖²` at the pre-update iterate.
    pub r2: f64,
    pub rho: f64,
    pub iota: f64,
    pub lo: f64,
    pub hi: f64,
    /// Stopping rule satisfied after this update.
    pub stopped: bool,
    /// `‖A x_{k−1} − b‖²` when the full system is known.
    pub true_r2: Option<f64>,
    /// `min` of the four stopping terms at this iteration.
    pub threshold: f64,
    /// `‖x_k − x*‖_B` after the update, when `x*` is known.
    pub error_b_norm: Option<f64>,
    #[serde(skip)]
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub lambda1: usize,
    pub lambda2: usize,
    pub max_iters: usize,
    pub stopping: StoppingParams,
    /// Keep iterating after the rule first fires (for error-rate studies).
    pub run_to_max: bool,
    /// Store `x_k` in every record.
    pub save_iterates: bool,
}

impl RunOptions {
    pub fn new(lambda1: usize, lambda2: usize, max_iters: usize, stopping: StoppingParams) -> Result<Self> {
        let o = Self {
            lambda1,
            lambda2,
            max_iters,
            stopping,
            run_to_max: false,
            save_iterates: false,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(invalid("max_iters", "must be >= 1"));
        }
        TrackerState::new(self.lambda1, self.lambda2)?;
        self.stopping.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub options: RunOptions,
    pub se: SubExpParams,
    pub records: Vec<IterRecord>,
    pub stop_iteration: Option<usize>,
    pub initial_error_b_norm: Option<f64>,
    #[serde(skip)]
    pub x_final: Vec<f64>,
}

impl RunTrace {
    /// Exact `ρ_k^λ`: the mean of `E[‖r̃_j‖² | F_{j−1}]` over record `k`'s window.
    /// Requires `true_r2` on every record; `scale` is the stream's expectation scale.
    pub fn exact_rho(&self, scale: f64) -> Option<Vec<f64>> {
        let t: Option<Vec<f64>> = self.records.iter().map(|r| r.true_r2).collect();
        let t = t?;
        Some(
            self.records
                .iter()
                .enumerate()
                .map(|(i, r)| scale * t[i + 1 - r.lambda..=i].iter().sum::<f64>() / r.lambda as f64)
                .collect(),
        )
    }
}

/// Solver and tracker advanced together one observation at a time.
#[derive(Debug, Clone)]
pub struct TrackedRun {
    pub solver: SolverState,
    pub tracker: TrackerState,
    pub se: SubExpParams,
    pub stopping: StoppingParams,
}

impl TrackedRun {
    pub fn new(
        x0: Vector,
        inner: Arc<InnerProduct>,
        se: SubExpParams,
        lambda1: usize,
        lambda2: usize,
        stopping: StoppingParams,
    ) -> Result<Self> {
        stopping.validate()?;
        Ok(Self {
            solver: SolverState::new(x0, inner)?,
            tracker: TrackerState::new(lambda1, lambda2)?,
            se,
            stopping,
        })
    }

    /// Residual, tracker update, interval, x-update and stopping check for one observation.
    pub fn advance(&mut self, obs: &crate::streams::Observation) -> Result<IterRecord> {
        let out = self.solver.step(obs)?;
        self.tracker.update(out.r_norm_sq)?;
        let iv = self.tracker.interval(self.se, self.stopping.alpha, self.stopping.eta)?;
        Ok(IterRecord {
            k: self.solver.k,
            lambda: self.tracker.lambda(),
            r2: out.r_norm_sq,
            rho: self.tracker.rho(),
            iota: self.tracker.iota(),
            lo: iv.lo(),
            hi: iv.hi(),
            stopped: self.tracker.should_stop(&self.stopping, self.se),
            true_r2: None,
            threshold: self.tracker.stop_threshold(&self.stopping, self.se),
            error_b_norm: None,
            x: None,
        })
    }
}

/// Runs the tracked solve until the stopping rule fires or `max_iters` is reached.
pub fn run_tracked_solve(
    source: &mut StreamSource,
    x0: Vector,
    inner: Arc<InnerProduct>,
    se: SubExpParams,
    opts: &RunOptions,
) -> Result<RunTrace> {
    opts.validate()?;
    if x0.len() != source.n() {
        return Err(crate::error::mismatch("x0", source.n(), x0.len()));
    }
    let x_star = source.x_star().cloned();
    let err = |x: &[f64]| -> Result<Option<f64>> {
        match &x_star {
            Some(xs) => Ok(Some(inner.norm(&sub(x, xs))?)),
            None => Ok(None),
        }
    };
    let initial_error_b_norm = err(&x0)?;
    let mut run = TrackedRun::new(x0, inner.clone(), se, opts.lambda1, opts.lambda2, opts.stopping)?;
    let mut records = Vec::new();
    let mut stop_iteration = None;
    for _ in 0..opts.max_iters {
        let true_r2 = source.full_residual_norm_sq(&run.solver.x)?;
        let obs = source.next_observation()?;
        let mut rec = run.advance(&obs)?;
        rec.true_r2 = true_r2;
        rec.error_b_norm = err(&run.solver.x)?;
        if opts.save_iterates {
            rec.x = Some(run.solver.x.to_vec());
        }
        let fired = rec.stopped;
        records.push(rec);
        if fired && stop_iteration.is_none() {
            stop_iteration = Some(run.solver.k);
            if !opts.run_to_max {
                break;
            }
        }
    }
    Ok(RunTrace {
        options: opts.clone(),
        se,
        records,
        stop_iteration,
        initial_error_b_norm,
        x_final: run.solver.x.into_vec(),
    })
}

/// Monte-Carlo `E‖Ã B^{-1/2}‖₂²`, the factor multiplying `‖x − x*‖²_B` in `M`.
pub fn estimate_sketch_norm_factor(
    source: &StreamSource,
    inner: &InnerProduct,
    n_samples: usize,
    rng: RngHandle,
) -> Result<f64> {
    if n_samples < 1 {
        return Err(invalid("n_samples", "must be >= 1"));
    }
    let mut src = source.reseeded(rng);
    let mut total = 0.0;
    for _ in 0..n_samples {
        let obs = src.next_observation()?;
        total += squared_spectral_norm(&inner.right_sqrt_inv(&obs.a_tilde)?)?;
    }
    Ok(total / n_samples as f64)
}

/// `M = E‖Ã B^{-1/2}‖₂² · ‖x_ref − x*‖²_B`.
pub fn estimate_m(
    source: &StreamSource,
    inner: &InnerProduct,
    x_ref: &[f64],
    x_star: Option<&[f64]>,
    n_samples: usize,
    rng: RngHandle,
) -> Result<f64> {
    let xs = x_star.ok_or(Error::MissingGroundTruth("estimate_m"))?;
    if xs.len() != x_ref.len() {
        return Err(crate::error::mismatch("estimate_m x*", x_ref.len(), xs.len()));
    }
    let e = inner.norm(&sub(x_ref, xs))?;
    if e == 0.0 {
        return Ok(0.0);
    }
    Ok(estimate_sketch_norm_factor(source, inner, n_samples, rng)? * e * e)
}

/// A consistent test system `A x* = b` streamed through a sketch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub generator: DepotMatrix,
    pub n: usize,
    pub method: SketchMethod,
    pub p: usize,
}

impl SystemConfig {
    /// Builds the matrix and a Uniform(0,1) `x*` from `rng.derive(0)`; the stream uses `rng.derive(1)`.
    pub fn build(&self, rng: RngHandle) -> Result<StreamSource> {
        let mut r = rng.derive(0).rng();
        let a = depot_matrix(self.generator, self.n, &mut r)?;
        let gt = StreamSource::random_solution(&a, &mut r)?;
        sketched_system_stream(gt.a, gt.b, Some(gt.x_star), self.method, self.p, rng.derive(1))
    }

    pub fn label(&self) -> String {
        format!("{}-{}-n{}-p{}", self.generator, self.method, self.n, self.p)
    }
}

/// Sets the worker count for replicate-level parallelism. Call once, before any
/// experiment; results do not depend on the count.
pub fn configure_jobs(jobs: usize) -> Result<()> {
    if jobs < 1 {
        return Err(invalid("jobs", "must be >= 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| invalid("jobs", e.to_string()))?;
    Ok(())
}

/// Order-preserving map over `0..n`, parallel when the `parallel` feature is on.
pub(crate) fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// `q`-th percentile (0–100) by linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn relative_error(est: f64, truth: f64) -> f64 {
    (est - truth).abs() / truth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{norm_sq, DenseMatrix};
    use crate::streams::row_subset_stream;

    fn fixed_stream() -> StreamSource {
        let a = DenseMatrix::from_rows(&[&[2.0]]).unwrap();
        let b = Vector::new(vec![6.0]).unwrap();
        row_subset_stream(a, b, Some(Vector::new(vec![3.0]).unwrap()), 1, RngHandle::new(0)).unwrap()
    }

    #[test]
    fn fixed_stream_stops_at_solution() {
        let mut src = fixed_stream();
        let opts = RunOptions::new(1, 3, 50, StoppingParams::reference()).unwrap();
        let se = src.se_params();
        let tr = run_tracked_solve(&mut src, Vector::zeros(1), Arc::new(InnerProduct::Identity), se, &opts).unwrap();
        // first update lands on x = 3; residual 0 afterwards
        let k = tr.stop_iteration.unwrap();
        assert_eq!(tr.records.len(), k);
        assert_eq!(tr.x_final, vec![3.0]);
        assert!(tr.records.last().unwrap().stopped);
        assert_eq!(tr.initial_error_b_norm, Some(3.0));
    }

    #[test]
    fn single_iteration_contract() {
        let mut src = fixed_stream();
        let opts = RunOptions::new(1, 1, 1, StoppingParams::reference()).unwrap();
        let se = src.se_params();
        let tr = run_tracked_solve(&mut src, Vector::zeros(1), Arc::new(InnerProduct::Identity), se, &opts).unwrap();
        assert_eq!(tr.records.len(), 1);
        // ρ̃ = 36 < υ, √ι̃ = 36; with σ = 1/2, ω = 0 the threshold is 100/(2·ln100·0.25·36) ≈ 1.21
        assert!(!tr.records[0].stopped);
        assert_eq!(tr.stop_iteration, None);
    }

    #[test]
    fn records_are_contiguous_and_bracket_rho() {
        let cfg = SystemConfig {
            generator: DepotMatrix::RandUniform,
            n: 24,
            method: SketchMethod::Gaussian,
            p: 6,
        };
        let mut src = cfg.build(RngHandle::new(3)).unwrap();
        let mut opts = RunOptions::new(1, 20, 200, StoppingParams::reference()).unwrap();
        opts.run_to_max = true;
        let se = src.se_params();
        let tr = run_tracked_solve(&mut src, Vector::zeros(24), Arc::new(InnerProduct::Identity), se, &opts).unwrap();
        assert_eq!(tr.records.len(), 200);
        let mut prev = tr.initial_error_b_norm.unwrap();
        for (i, r) in tr.records.iter().enumerate() {
            assert_eq!(r.k, i + 1);
            assert!(r.lo <= r.rho && r.rho <= r.hi);
            let e = r.error_b_norm.unwrap();
            assert!(e <= prev + 1e-10);
            prev = e;
        }
        let rho = tr.exact_rho(1.0).unwrap();
        assert_eq!(rho.len(), 200);
    }

    #[test]
    fn m_estimates() {
        let cfg = SystemConfig {
            generator: DepotMatrix::Rohess,
            n: 16,
            method: SketchMethod::RowSubset,
            p: 16,
        };
        let src = cfg.build(RngHandle::new(1)).unwrap();
        let xs = src.x_star().unwrap().to_vec();
        let ip = InnerProduct::Identity;
        assert_eq!(
            estimate_m(&src, &ip, &xs, Some(&xs), 10, RngHandle::new(2)).unwrap(),
            0.0
        );
        // full row subset of an orthogonal matrix: ‖Ã‖₂ = 1, so M = ‖x − x*‖²
        let x0 = vec![0.0; 16];
        let m = estimate_m(&src, &ip, &x0, Some(&xs), 5, RngHandle::new(2)).unwrap();
        assert!((m - norm_sq(&xs)).abs() < 1e-9 * m);
        assert!(estimate_m(&src, &ip, &x0, None, 5, RngHandle::new(2)).is_err());
    }

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert_eq!(percentile(&v, 25.0), 2.0);
    }
}
