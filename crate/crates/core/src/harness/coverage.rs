//! Two-stage conditional coverage and estimator consistency.
//!
//! Stage 1 runs the solver for `n_iters` iterations with a fixed window and keeps
//! every iterate `x_k`. Stage 2 restarts from each `x_k` for `λ` iterations,
//! `n_replicates` times. The mean of the replicate `ρ̃` values is the reference
//! `ρ̂_k`, and every replicate's own interval is checked against it.

use std::sync::Arc;

use serde::Serialize;

use super::{indexed_map, percentile, relative_error, RunTrace};
use crate::error::{invalid, Error, Result};
use crate::numerics::{InnerProduct, RngHandle, Vector};
use crate::solver::SolverState;
use crate::streams::StreamSource;
use crate::subexp::SubExpParams;
use crate::tracker::{plug_in_interval, TrackerState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageConfig {
    pub n_iters: usize,
    pub lambda: usize,
    pub n_replicates: usize,
    pub alpha: f64,
    /// Contraction values evaluated on the same replicates.
    pub etas: Vec<f64>,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            n_iters: 300,
            lambda: 15,
            n_replicates: 100,
            alpha: 0.05,
            etas: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    /// Stage-1 iteration whose iterate `x_k` seeds the replicates.
    pub k: usize,
    pub rho_hat: f64,
    pub stage1_rho: f64,
    pub stage1_iota: f64,
    pub replicate_rho: Vec<f64>,
    pub replicate_iota: Vec<f64>,
    /// Replicate intervals missing `ρ̂`, per `η`.
    pub misses: Vec<usize>,
    /// Stage-1 interval at iteration `k + λ` (same window of iterates) missing `ρ̂`, per `η`.
    pub aligned_miss: Vec<Option<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaCoverage {
    pub eta: f64,
    pub misses: usize,
    pub comparisons: usize,
    pub failure_rate: f64,
    pub aligned_misses: usize,
    pub aligned_comparisons: usize,
    pub aligned_failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub config: CoverageConfig,
    pub se: SubExpParams,
    pub per_eta: Vec<EtaCoverage>,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn failure_rate(&self, eta: f64) -> Option<f64> {
        self.per_eta.iter().find(|e| e.eta == eta).map(|e| e.failure_rate)
    }
}

/// Permutation-invariant mean (sums in sorted order).
fn stable_mean(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.iter().sum::<f64>() / s.len() as f64
}

fn misses_for(
    rho: &[f64],
    iota: &[f64],
    lambda: usize,
    rho_hat: f64,
    se: SubExpParams,
    alpha: f64,
    eta: f64,
) -> Result<usize> {
    let mut n = 0;
    for (&r, &i) in rho.iter().zip(iota) {
        if !plug_in_interval(r, i, lambda, se, alpha, eta)?.contains(rho_hat) {
            n += 1;
        }
    }
    Ok(n)
}

pub fn two_stage_coverage(
    source: &StreamSource,
    x0: Vector,
    inner: Arc<InnerProduct>,
    cfg: &CoverageConfig,
    rng: RngHandle,
) -> Result<CoverageReport> {
    if cfg.n_iters < 1 || cfg.n_replicates < 1 {
        return Err(invalid("n_iters/n_replicates", "must be >= 1"));
    }
    if cfg.etas.is_empty() || cfg.etas.iter().any(|&e| !(e >= 1.0)) {
        return Err(invalid("etas", "need at least one value, each >= 1"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0,1), got {}", cfg.alpha)));
    }
    let se = source.se_params();
    let lambda = cfg.lambda;

    let mut src = source.reseeded(rng.derive(0));
    let mut solver = SolverState::new(x0, inner.clone())?;
    let mut tracker = TrackerState::fixed(lambda)?;
    let mut iterates = Vec::with_capacity(cfg.n_iters);
    let mut stage1 = Vec::with_capacity(cfg.n_iters);
    for _ in 0..cfg.n_iters {
        let out = solver.step(&src.next_observation()?)?;
        tracker.update(out.r_norm_sq)?;
        iterates.push(solver.x.clone());
        stage1.push((tracker.rho(), tracker.iota(), tracker.lambda()));
    }

    let replicate = |k: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let base = rng.derive(k as u64);
        let mut rhos = Vec::with_capacity(cfg.n_replicates);
        let mut iotas = Vec::with_capacity(cfg.n_replicates);
        for r in 0..cfg.n_replicates {
            let mut s = source.reseeded(base.derive(r as u64));
            let mut sol = SolverState::new(iterates[k - 1].clone(), inner.clone())?;
            let mut t = TrackerState::fixed(lambda)?;
            for _ in 0..lambda {
                t.update(sol.step(&s.next_observation()?)?.r_norm_sq)?;
            }
            rhos.push(t.rho());
            iotas.push(t.iota());
        }
        Ok((rhos, iotas))
    };
    let reps: Vec<Result<(Vec<f64>, Vec<f64>)>> = indexed_map(cfg.n_iters, |i| replicate(i + 1));

    let mut rows = Vec::with_capacity(cfg.n_iters);
    for (i, rep) in reps.into_iter().enumerate() {
        let k = i + 1;
        let (replicate_rho, replicate_iota) = rep?;
        let rho_hat = stable_mean(&replicate_rho);
        let mut misses = Vec::with_capacity(cfg.etas.len());
        let mut aligned_miss = Vec::with_capacity(cfg.etas.len());
        for &eta in &cfg.etas {
            misses.push(misses_for(
                &replicate_rho,
                &replicate_iota,
                lambda,
                rho_hat,
                se,
                cfg.alpha,
                eta,
            )?);
            aligned_miss.push(match stage1.get(k + lambda - 1) {
                Some(&(r, io, l)) if l == lambda => {
                    Some(misses_for(&[r], &[io], lambda, rho_hat, se, cfg.alpha, eta)? == 1)
                }
                _ => None,
            });
        }
        rows.push(CoverageRow {
            k,
            rho_hat,
            stage1_rho: stage1[i].0,
            stage1_iota: stage1[i].1,
            replicate_rho,
            replicate_iota,
            misses,
            aligned_miss,
        });
    }

    let per_eta = cfg
        .etas
        .iter()
        .enumerate()
        .map(|(e, &eta)| {
            let misses: usize = rows.iter().map(|r| r.misses[e]).sum();
            let comparisons = rows.len() * cfg.n_replicates;
            let aligned: Vec<bool> = rows.iter().filter_map(|r| r.aligned_miss[e]).collect();
            let aligned_misses = aligned.iter().filter(|&&m| m).count();
            EtaCoverage {
                eta,
                misses,
                comparisons,
                failure_rate: misses as f64 / comparisons as f64,
                aligned_misses,
                aligned_comparisons: aligned.len(),
                aligned_failure_rate: if aligned.is_empty() {
                    0.0
                } else {
                    aligned_misses as f64 / aligned.len() as f64
                },
            }
        })
        .collect();

    Ok(CoverageReport {
        config: cfg.clone(),
        se,
        per_eta,
        rows,
    })
}

/// Estimates and their reference value at each iteration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyCell {
    pub estimates: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub percentiles: Vec<f64>,
    /// `curves[j][k]`: percentile `j` of `|ρ̃ − ρ̂|/ρ̂` pooled over cells at iteration `k+1`.
    pub curves: Vec<Vec<f64>>,
    /// `max_k / median_k` of each curve (from `skip` onwards).
    pub boundedness: Vec<f64>,
    pub skip: usize,
    pub n_cells: usize,
}

pub fn consistency_from_coverage(reports: &[CoverageReport]) -> Vec<ConsistencyCell> {
    reports
        .iter()
        .map(|r| ConsistencyCell {
            estimates: r.rows.iter().map(|row| row.replicate_rho.clone()).collect(),
            reference: r.rows.iter().map(|row| row.rho_hat).collect(),
        })
        .collect()
}

/// Single-estimate cells against the exact moving average (traces with a known system).
pub fn consistency_from_traces(traces: &[(RunTrace, f64)]) -> Result<Vec<ConsistencyCell>> {
    traces
        .iter()
        .map(|(t, scale)| {
            let reference = t
                .exact_rho(*scale)
                .ok_or(Error::MissingGroundTruth("consistency_from_traces"))?;
            Ok(ConsistencyCell {
                estimates: t.records.iter().map(|r| vec![r.rho]).collect(),
                reference,
            })
        })
        .collect()
}

/// Percentile curves of the relative error; iterations before `skip` are excluded
/// from the boundedness ratio only.
pub fn consistency_report(cells: &[ConsistencyCell], percentiles: &[f64], skip: usize) -> Result<ConsistencyReport> {
    if cells.is_empty() {
        return Err(Error::Empty("consistency cells"));
    }
    let len = cells
        .iter()
        .map(|c| c.reference.len().min(c.estimates.len()))
        .min()
        .unwrap_or(0);
    if len == 0 {
        return Err(Error::Empty("consistency iterations"));
    }
    let mut curves = vec![Vec::with_capacity(len); percentiles.len()];
    for k in 0..len {
        let mut errs: Vec<f64> = Vec::new();
        for c in cells {
            let truth = c.reference[k];
            for &est in &c.estimates[k] {
                errs.push(if truth == 0.0 && est == 0.0 {
                    0.0
                } else {
                    relative_error(est, truth)
                });
            }
        }
        errs.retain(|e| e.is_finite());
        errs.sort_by(f64::total_cmp);
        for (j, &q) in percentiles.iter().enumerate() {
            curves[j].push(percentile(&errs, q));
        }
    }
    let boundedness = curves
        .iter()
        .map(|c| {
            let mut tail: Vec<f64> = c.iter().skip(skip).copied().filter(|v| v.is_finite()).collect();
            tail.sort_by(f64::total_cmp);
            let med = percentile(&tail, 50.0);
            let max = tail.last().copied().unwrap_or(f64::NAN);
            if med == 0.0 && max == 0.0 {
                1.0
            } else {
                max / med
            }
        })
        .collect();
    Ok(ConsistencyReport {
        percentiles: percentiles.to_vec(),
        curves,
        boundedness,
        skip,
        n_cells: cells.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SystemConfig;
    use crate::streams::DepotMatrix;
    use crate::subexp::SketchMethod;

    fn small(method: SketchMethod, p: usize) -> StreamSource {
        SystemConfig {
            generator: DepotMatrix::Rohess,
            n: 12,
            method,
            p,
        }
        .build(RngHandle::new(4))
        .unwrap()
    }

    #[test]
    fn deterministic_stream_never_misses() {
        let src = small(SketchMethod::RowSubset, 12);
        let cfg = CoverageConfig {
            n_iters: 5,
            lambda: 3,
            n_replicates: 4,
            alpha: 0.05,
            etas: vec![1.0, 26.0],
        };
        let rep = two_stage_coverage(
            &src,
            Vector::zeros(12),
            Arc::new(InnerProduct::Identity),
            &cfg,
            RngHandle::new(1),
        )
        .unwrap();
        for e in &rep.per_eta {
            assert_eq!(e.misses, 0);
        }
        for row in &rep.rows {
            assert!(row.replicate_rho.iter().all(|&r| r == row.replicate_rho[0]));
        }
    }

    #[test]
    fn replicate_order_does_not_matter() {
        let src = small(SketchMethod::Gaussian, 4);
        let cfg = CoverageConfig {
            n_iters: 6,
            lambda: 3,
            n_replicates: 7,
            alpha: 0.05,
            etas: vec![1.0, 26.0],
        };
        let rep = two_stage_coverage(
            &src,
            Vector::zeros(12),
            Arc::new(InnerProduct::Identity),
            &cfg,
            RngHandle::new(2),
        )
        .unwrap();
        let se = rep.se;
        for row in &rep.rows {
            let mut rho = row.replicate_rho.clone();
            let mut iota = row.replicate_iota.clone();
            rho.reverse();
            iota.reverse();
            rho.rotate_left(2);
            iota.rotate_left(2);
            assert_eq!(stable_mean(&rho).to_bits(), row.rho_hat.to_bits());
            for (e, &eta) in cfg.etas.iter().enumerate() {
                assert_eq!(
                    misses_for(&rho, &iota, 3, row.rho_hat, se, 0.05, eta).unwrap(),
                    row.misses[e]
                );
            }
        }
        assert_eq!(rep.per_eta[0].comparisons, 42);
        assert!(rep.rows[0].aligned_miss[0].is_some());
        assert!(rep.rows[5].aligned_miss[0].is_none());
    }

    #[test]
    fn consistency_of_exact_estimates_is_zero() {
        let cells = vec![ConsistencyCell {
            estimates: vec![vec![2.0, 2.0], vec![1.0]],
            reference: vec![2.0, 1.0],
        }];
        let rep = consistency_report(&cells, &[5.0, 50.0, 95.0], 0).unwrap();
        for c in &rep.curves {
            assert!(c.iter().all(|&v| v == 0.0));
        }
        assert!(consistency_report(&[], &[50.0], 0).is_err());
    }
}
