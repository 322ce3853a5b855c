//! Tracked solve of the random-coordinate collocation problem.
//!
//! No finite system exists, so `E[‖r̃_k‖² | F_{k−1}]` is estimated at every
//! iteration from fresh observations at `x_{k−1}`. One further fresh observation
//! gives a held-out sketched residual `h_k`. After `sigma_window` iterations the
//! theoretical `σ` is replaced by `σ² = Var(|Ê_j − h_j| / Ê_j, j ≤ sigma_window)`.

use std::sync::Arc;

use serde::Serialize;

use super::{IterRecord, RunOptions, RunTrace, TrackedRun};
use crate::error::{invalid, Result};
use crate::numerics::{InnerProduct, RngHandle, Vector};
use crate::streams::{collocation_stream, estimate_gram_sigma_min, StreamSource};
use crate::subexp::{collocation_params, SubExpParams};
use crate::tracker::StoppingParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollocationConfig {
    pub eps: f64,
    pub p: usize,
    pub lambda1: usize,
    pub lambda2: usize,
    pub max_iters: usize,
    pub stopping: StoppingParams,
    pub n_cond_replicates: usize,
    pub sigma_window: usize,
    pub sigma_min_samples: usize,
}

impl Default for CollocationConfig {
    fn default() -> Self {
        Self {
            eps: 0.25,
            p: 20,
            lambda1: 1,
            lambda2: 500,
            max_iters: 200,
            stopping: StoppingParams {
                upsilon: 200.0,
                ..StoppingParams::reference()
            },
            n_cond_replicates: 100,
            sigma_window: 125,
            sigma_min_samples: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollocationRow {
    pub k: usize,
    /// `Ê[‖r̃_k‖² | F_{k−1}]`.
    pub e_hat: f64,
    pub held_out: f64,
    /// Moving average of `Ê` over the tracker's current window.
    pub rho_hat: f64,
    pub sigma: f64,
    pub covered: bool,
    pub eligible: bool,
    pub late: bool,
    pub early: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollocationReport {
    pub config: CollocationConfig,
    pub n_cols: usize,
    pub sigma_min: f64,
    pub sigma_theory: f64,
    pub sigma_empirical: Option<f64>,
    pub coverage: f64,
    /// Coverage over iterations after the `σ` window.
    pub coverage_after_window: Option<f64>,
    pub n_eligible: usize,
    pub late: usize,
    pub early: usize,
    pub stop_iteration: Option<usize>,
    pub rows: Vec<CollocationRow>,
    pub trace: RunTrace,
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

pub fn collocation_experiment(cfg: &CollocationConfig, rng: RngHandle) -> Result<CollocationReport> {
    if cfg.n_cond_replicates < 1 {
        return Err(invalid("n_cond_replicates", "must be >= 1"));
    }
    if cfg.sigma_window < 2 {
        return Err(invalid("sigma_window", "must be >= 2"));
    }
    let opts = RunOptions::new(cfg.lambda1, cfg.lambda2, cfg.max_iters, cfg.stopping)?;
    let base: StreamSource = collocation_stream(cfg.eps, cfg.p, rng.derive(0))?;
    let n = base.n();
    let sigma_min = estimate_gram_sigma_min(&base, cfg.sigma_min_samples, rng.derive(1))?;
    let (_, se_theory) = collocation_params(n, sigma_min)?;

    let mut main = base.reseeded(rng.derive(2));
    let mut cond = base.reseeded(rng.derive(3));
    let mut held = base.reseeded(rng.derive(4));
    let inner = Arc::new(InnerProduct::Identity);
    let mut run = TrackedRun::new(
        Vector::zeros(n),
        inner,
        se_theory,
        cfg.lambda1,
        cfg.lambda2,
        cfg.stopping,
    )?;

    let mut e_hats: Vec<f64> = Vec::with_capacity(cfg.max_iters);
    let mut rel_dev: Vec<f64> = Vec::with_capacity(cfg.sigma_window);
    let mut sigma_empirical = None;
    let mut rows = Vec::with_capacity(cfg.max_iters);
    let mut records: Vec<IterRecord> = Vec::with_capacity(cfg.max_iters);
    let mut stop_iteration = None;
    let p = cfg.stopping;

    for _ in 0..cfg.max_iters {
        let x_prev = run.solver.x.clone();
        let mut total = 0.0;
        for _ in 0..cfg.n_cond_replicates {
            total += cond.next_observation()?.residual_norm_sq(&x_prev)?;
        }
        let e_hat = total / cfg.n_cond_replicates as f64;
        let h = held.next_observation()?.residual_norm_sq(&x_prev)?;
        e_hats.push(e_hat);

        let rec = run.advance(&main.next_observation()?)?;
        let k = rec.k;
        let rho_hat = e_hats[k - rec.lambda..].iter().sum::<f64>() / rec.lambda as f64;
        let eligible = rec.iota.sqrt() < rec.threshold;
        rows.push(CollocationRow {
            k,
            e_hat,
            held_out: h,
            rho_hat,
            sigma: run.se.sigma,
            covered: rec.lo <= rho_hat && rho_hat <= rec.hi,
            eligible,
            late: eligible && rec.rho > p.upsilon && rho_hat <= p.delta_i * p.upsilon,
            early: eligible && rec.rho <= p.upsilon && rho_hat > p.delta_ii * p.upsilon,
        });
        if rec.stopped && stop_iteration.is_none() {
            stop_iteration = Some(k);
        }
        records.push(rec);

        if k <= cfg.sigma_window {
            rel_dev.push((e_hat - h).abs() / e_hat);
            if k == cfg.sigma_window {
                let s = sample_variance(&rel_dev).sqrt();
                sigma_empirical = Some(s);
                run.se = SubExpParams::new(s, se_theory.omega)?;
            }
        }
    }

    let frac = |it: &mut dyn Iterator<Item = &CollocationRow>| -> Option<f64> {
        let (c, t) = it.fold((0usize, 0usize), |(c, t), r| (c + r.covered as usize, t + 1));
        (t > 0).then(|| c as f64 / t as f64)
    };
    let coverage = frac(&mut rows.iter()).unwrap_or(0.0);
    let coverage_after_window = frac(&mut rows.iter().filter(|r| r.k > cfg.sigma_window));
    let n_eligible = rows.iter().filter(|r| r.eligible).count();
    let late = rows.iter().filter(|r| r.late).count();
    let early = rows.iter().filter(|r| r.early).count();
    let x_final = run.solver.x.to_vec();
    let mut trace_opts = opts;
    trace_opts.run_to_max = true;
    Ok(CollocationReport {
        config: cfg.clone(),
        n_cols: n,
        sigma_min,
        sigma_theory: se_theory.sigma,
        sigma_empirical,
        coverage,
        coverage_after_window,
        n_eligible,
        late,
        early,
        stop_iteration,
        rows,
        trace: RunTrace {
            options: trace_opts,
            se: run.se,
            records,
            stop_iteration,
            initial_error_b_norm: None,
            x_final,
        },
    })
}
