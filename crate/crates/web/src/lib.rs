//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string. The plain-Rust functions behind them
//! are tested natively.

use std::sync::Arc;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sapstop::harness::{run_tracked_solve, sketch_tail_check, RunOptions, SystemConfig, TailCheck};
use sapstop::numerics::{InnerProduct, RngHandle, Vector};
use sapstop::subexp::{default_eta, SubExpParams};
use sapstop::tracker::{plug_in_interval, Branch, StoppingParams, TrackerState};

const MAX_N: usize = 256;
const MAX_ITERS: usize = 20_000;
const MAX_SAMPLES: usize = 50_000;

#[derive(Debug, Serialize)]
pub struct TracePoint {
    pub k: usize,
    pub rho: f64,
    pub lo: f64,
    pub hi: f64,
    pub threshold: f64,
    pub true_r2: Option<f64>,
    pub error: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub label: String,
    pub eta: f64,
    pub stop_iteration: Option<usize>,
    pub initial_error: Option<f64>,
    pub points: Vec<TracePoint>,
}

#[derive(Debug, Serialize)]
pub struct Explained {
    pub lo: f64,
    pub hi: f64,
    pub half_width: f64,
    pub branch: Branch,
    pub threshold: f64,
    pub stop: bool,
}

fn cap(name: &'static str, v: usize, max: usize) -> sapstop::Result<()> {
    if v > max {
        return Err(sapstop::Error::InvalidParameter {
            name,
            reason: format!("demo limit is {max}, got {v}"),
        });
    }
    Ok(())
}

/// Tracked solve on a generated system. `eta <= 0` picks the method's default.
#[allow(clippy::too_many_arguments)]
pub fn solve_json(
    generator: &str,
    n: usize,
    method: &str,
    p: usize,
    lambda1: usize,
    lambda2: usize,
    upsilon: f64,
    eta: f64,
    max_iters: usize,
    seed: u64,
) -> sapstop::Result<String> {
    cap("n", n, MAX_N)?;
    cap("max_iters", max_iters, MAX_ITERS)?;
    let cfg = SystemConfig {
        generator: generator.parse()?,
        n,
        method: method.parse()?,
        p,
    };
    let eta = if eta > 0.0 { eta } else { default_eta(cfg.method) };
    let rng = RngHandle::new(seed);
    let mut src = cfg.build(rng)?;
    let stopping = StoppingParams {
        upsilon,
        eta,
        ..StoppingParams::reference()
    };
    let opts = RunOptions::new(lambda1, lambda2, max_iters, stopping)?;
    let se = src.se_params();
    let tr = run_tracked_solve(&mut src, Vector::zeros(n), Arc::new(InnerProduct::Identity), se, &opts)?;
    let points = tr
        .records
        .iter()
        .map(|r| TracePoint {
            k: r.k,
            rho: r.rho,
            lo: r.lo,
            hi: r.hi,
            threshold: r.threshold,
            true_r2: r.true_r2,
            error: r.error_b_norm,
        })
        .collect();
    let out = SolveSummary {
        label: cfg.label(),
        eta,
        stop_iteration: tr.stop_iteration,
        initial_error: tr.initial_error_b_norm,
        points,
    };
    Ok(serde_json::to_string(&out)?)
}

pub fn tail_json(method: &str, m: usize, p: usize, samples: usize, seed: u64) -> sapstop::Result<String> {
    cap("samples", samples, MAX_SAMPLES)?;
    cap("m", m, 4096)?;
    let grid = [0.25, 0.5, 1.0, 2.0];
    let tc: TailCheck = sketch_tail_check(method.parse()?, m, p, samples, &grid, RngHandle::new(seed))?;
    Ok(serde_json::to_string(&tc)?)
}

/// Interval and stopping threshold for a window whose `λ` values all equal `r2`,
/// so `ρ̃ = r2` and `ι̃ = r2²`.
#[allow(clippy::too_many_arguments)]
pub fn explain_json(
    r2: f64,
    lambda: usize,
    sigma: f64,
    omega: f64,
    alpha: f64,
    eta: f64,
    upsilon: f64,
) -> sapstop::Result<String> {
    cap("lambda", lambda, 10_000)?;
    let se = SubExpParams::new(sigma, omega)?;
    let params = StoppingParams {
        upsilon,
        eta,
        alpha,
        ..StoppingParams::reference()
    };
    params.validate()?;
    let mut t = TrackerState::fixed(lambda)?;
    for _ in 0..lambda {
        t.update(r2)?;
    }
    let iv = plug_in_interval(t.rho(), t.iota(), lambda, se, alpha, eta)?;
    let out = Explained {
        lo: iv.lo(),
        hi: iv.hi(),
        half_width: iv.half_width,
        branch: iv.branch,
        threshold: t.stop_threshold(&params, se),
        stop: t.should_stop(&params, se),
    };
    Ok(serde_json::to_string(&out)?)
}

fn js(r: sapstop::Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn solve(
    generator: &str,
    n: usize,
    method: &str,
    p: usize,
    lambda1: usize,
    lambda2: usize,
    upsilon: f64,
    eta: f64,
    max_iters: usize,
    seed: u64,
) -> Result<String, JsError> {
    js(solve_json(
        generator, n, method, p, lambda1, lambda2, upsilon, eta, max_iters, seed,
    ))
}

#[wasm_bindgen]
pub fn tail_check(method: &str, m: usize, p: usize, samples: usize, seed: u64) -> Result<String, JsError> {
    js(tail_json(method, m, p, samples, seed))
}

#[wasm_bindgen]
pub fn explain(
    r2: f64,
    lambda: usize,
    sigma: f64,
    omega: f64,
    alpha: f64,
    eta: f64,
    upsilon: f64,
) -> Result<String, JsError> {
    js(explain_json(r2, lambda, sigma, omega, alpha, eta, upsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn solve_trace_is_seeded() {
        let a = solve_json("rohess", 24, "gaussian", 6, 1, 15, 1e-3, 0.0, 300, 4).unwrap();
        let b = solve_json("rohess", 24, "gaussian", 6, 1, 15, 1e-3, 0.0, 300, 4).unwrap();
        assert_eq!(a, b);
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["eta"], 26.0);
        let pts = v["points"].as_array().unwrap();
        assert!(!pts.is_empty() && pts.len() <= 300);
        if let Some(k) = v["stop_iteration"].as_u64() {
            assert_eq!(k as usize, pts.len());
        }
    }

    #[test]
    fn limits_and_bad_names() {
        assert!(solve_json("rohess", 1000, "gaussian", 6, 1, 15, 1.0, 1.0, 10, 0).is_err());
        assert!(solve_json("nope", 16, "gaussian", 6, 1, 15, 1.0, 1.0, 10, 0).is_err());
        assert!(tail_json("gaussian", 64, 8, MAX_SAMPLES + 1, 0).is_err());
        assert!(explain_json(1.0, 5, 0.4, 0.1, 1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn tail_check_reports_grid() {
        let v: Value = serde_json::from_str(&tail_json("row_subset", 50, 5, 2000, 1).unwrap()).unwrap();
        assert_eq!(v["report"]["rows"].as_array().unwrap().len(), 4);
        assert_eq!(v["outside_support"], 0);
    }

    #[test]
    fn explain_matches_direct_interval() {
        let v: Value = serde_json::from_str(&explain_json(4.0, 15, 0.413, 0.1127, 0.05, 1.0, 100.0).unwrap()).unwrap();
        let se = SubExpParams::new(0.413, 0.1127).unwrap();
        let iv = plug_in_interval(4.0, 16.0, 15, se, 0.05, 1.0).unwrap();
        assert_eq!(v["half_width"].as_f64().unwrap(), iv.half_width);
        assert!(v["lo"].as_f64().unwrap() < 4.0 && v["hi"].as_f64().unwrap() > 4.0);
        assert_eq!(v["branch"], "sub_gaussian");
    }
}
