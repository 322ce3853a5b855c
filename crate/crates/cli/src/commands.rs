//! Subcommand bodies. Each returns a summary and the CSV tables to write.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use sapstop::harness::{
    collocation_experiment, consistency_from_traces, consistency_report, run_tracked_solve, sketch_tail_check,
    stopping_error_rates, two_stage_coverage, CollocationConfig, CoverageConfig, RunOptions, StoppingReport,
    SystemConfig,
};
use sapstop::io;
use sapstop::numerics::{DenseMatrix, InnerProduct, RngHandle, Vector};
use sapstop::streams::{sketched_system_stream, DepotMatrix, GroundTruth, StreamSource};
use sapstop::subexp::{default_eta, SketchMethod};
use sapstop::tracker::StoppingParams;
use sapstop::Error;

use crate::args::*;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_STOP: i32 = 2;
pub const EXIT_PREDICATE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub command: &'static str,
    pub seed: u64,
    pub passed: bool,
    pub exit_code: i32,
    pub predicate: String,
    pub config: Value,
    pub failure_rates: BTreeMap<String, f64>,
    pub stop_iteration: Option<usize>,
    pub results: Value,
}

/// A CSV destination: `None` uses the primary name, `Some(suffix)` appends to its stem.
pub struct Output {
    pub suffix: Option<&'static str>,
    pub csv: Vec<u8>,
}

pub struct Outcome {
    pub summary: Summary,
    pub outputs: Vec<Output>,
    pub final_x: Option<(PathBuf, Vec<f64>)>,
}

fn reference(common: &CommonArgs) -> bool {
    common.preset == Some(Preset::Reference)
}

/// Flag value, else the preset value when the preset is active, else the default.
fn pick<T: Copy>(flag: Option<T>, preset: bool, preset_value: T, default: T) -> T {
    flag.unwrap_or(if preset { preset_value } else { default })
}

fn stopping_params(
    s: &StopArgs,
    method: Option<SketchMethod>,
    base: StoppingParams,
) -> sapstop::Result<StoppingParams> {
    let eta = match s.eta {
        None => base.eta,
        Some(EtaArg::Value(v)) => v,
        Some(EtaArg::Table) => method.map_or(1.0, default_eta),
    };
    StoppingParams::new(
        s.upsilon.unwrap_or(base.upsilon),
        s.delta_i.unwrap_or(base.delta_i),
        s.delta_ii.unwrap_or(base.delta_ii),
        s.xi_i.unwrap_or(base.xi_i),
        s.xi_ii.unwrap_or(base.xi_ii),
        eta,
        s.alpha.unwrap_or(base.alpha),
    )
}

fn rows_csv<T: Serialize>(rows: &[T]) -> sapstop::Result<Vec<u8>> {
    let mut buf = Vec::new();
    io::write_rows_csv(&mut buf, rows)?;
    Ok(buf)
}

fn trace_csv(records: &[sapstop::harness::IterRecord]) -> sapstop::Result<Vec<u8>> {
    let mut buf = Vec::new();
    io::write_trace_csv(&mut buf, records)?;
    Ok(buf)
}

fn file_name(p: &Path, what: &'static str) -> sapstop::Result<PathBuf> {
    if p.is_absolute()
        || p.components()
            .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return Err(Error::InvalidParameter {
            name: what,
            reason: format!("`{}` must be a relative path inside the output directory", p.display()),
        });
    }
    Ok(p.to_path_buf())
}

pub fn output_paths(common: &CommonArgs, command: &str) -> sapstop::Result<(PathBuf, PathBuf)> {
    let csv = match &common.csv {
        Some(p) => file_name(p, "csv")?,
        None => PathBuf::from(format!("{command}.csv")),
    };
    let json = match &common.json {
        Some(p) => file_name(p, "json")?,
        None => PathBuf::from(format!("{command}.json")),
    };
    Ok((common.out_dir.join(csv), common.out_dir.join(json)))
}

#[allow(clippy::too_many_arguments)]
fn summary(
    command: &'static str,
    seed: u64,
    passed: bool,
    exit_code: i32,
    predicate: String,
    config: Value,
    failure_rates: BTreeMap<String, f64>,
    stop_iteration: Option<usize>,
    results: Value,
) -> Summary {
    Summary {
        schema_version: SCHEMA_VERSION,
        command,
        seed,
        passed,
        exit_code,
        predicate,
        config,
        failure_rates,
        stop_iteration,
        results,
    }
}

fn predicate_exit(passed: bool) -> i32 {
    if passed {
        EXIT_OK
    } else {
        EXIT_PREDICATE
    }
}

fn build_system(
    a: &SolveArgs,
    method: SketchMethod,
    p: usize,
    rng: RngHandle,
) -> sapstop::Result<(StreamSource, Value)> {
    let Some(mpath) = &a.matrix else {
        let cfg = SystemConfig {
            generator: a.generator.unwrap_or(DepotMatrix::RandUniform),
            n: a.n.unwrap_or(64),
            method,
            p,
        };
        return Ok((cfg.build(rng)?, json!({ "generator": cfg.generator, "n": cfg.n })));
    };
    let m: DenseMatrix = io::read_matrix(mpath)?;
    let x_star = a.solution.as_ref().map(io::read_vector).transpose()?;
    let (a_mat, b, xs) = match (&a.rhs, x_star) {
        (Some(bp), xs) => (m, io::read_vector(bp)?, xs),
        (None, Some(xs)) => {
            let gt = GroundTruth::from_solution(m, xs)?;
            (gt.a, gt.b, Some(gt.x_star))
        }
        (None, None) => {
            let gt = StreamSource::random_solution(&m, &mut rng.derive(0).rng())?;
            (gt.a, gt.b, Some(gt.x_star))
        }
    };
    let info = json!({ "matrix_rows": a_mat.rows(), "n": a_mat.cols() });
    Ok((sketched_system_stream(a_mat, b, xs, method, p, rng.derive(1))?, info))
}

pub fn solve(a: &SolveArgs) -> sapstop::Result<Outcome> {
    let pre = reference(&a.common);
    let method = a.method.unwrap_or(SketchMethod::Gaussian);
    let p = pick(a.p, pre, 25, 16);
    let lambda1 = pick(a.lambda1, pre, 15, 1);
    let lambda2 = pick(a.lambda2, pre, 15, 15);
    let max_iters = pick(a.max_iters, pre, 300, 5000);
    let stop = stopping_params(&a.stop, Some(method), StoppingParams::reference())?;
    let opts = RunOptions::new(lambda1, lambda2, max_iters, stop)?;
    let rng = RngHandle::new(a.common.seed);
    let (mut src, sys) = build_system(a, method, p, rng)?;
    let inner = match &a.b_inv {
        Some(path) => InnerProduct::from_b_inv(io::read_matrix(path)?)?,
        None => InnerProduct::Identity,
    };
    let n = src.n();
    let se = src.se_params();
    let trace = run_tracked_solve(&mut src, Vector::zeros(n), Arc::new(inner), se, &opts)?;
    let last = trace.records.last().expect("max_iters >= 1");
    let stopped = trace.stop_iteration.is_some();
    let exit = if stopped { EXIT_OK } else { EXIT_NO_STOP };
    let config = json!({
        "system": sys,
        "method": method,
        "p": p,
        "b_inv": a.b_inv.is_some(),
        "options": opts,
    });
    let results = json!({
        "iterations": trace.records.len(),
        "se": trace.se,
        "final_rho": last.rho,
        "final_iota": last.iota,
        "final_interval": [last.lo, last.hi],
        "final_lambda": last.lambda,
        "initial_error_b_norm": trace.initial_error_b_norm,
        "final_error_b_norm": last.error_b_norm,
    });
    let final_x = a
        .save_x
        .as_ref()
        .map(|p| file_name(p, "save-x").map(|f| (a.common.out_dir.join(f), trace.x_final.clone())))
        .transpose()?;
    Ok(Outcome {
        summary: summary(
            "solve",
            a.common.seed,
            stopped,
            exit,
            "stopping rule fired before max_iters".into(),
            config,
            BTreeMap::new(),
            trace.stop_iteration,
            results,
        ),
        outputs: vec![Output {
            suffix: None,
            csv: trace_csv(&trace.records)?,
        }],
        final_x,
    })
}

fn eta_values(etas: &[EtaArg], method: SketchMethod, preset: bool) -> Vec<f64> {
    let mut out: Vec<f64> = if etas.is_empty() {
        if preset {
            vec![1.0, default_eta(method)]
        } else {
            vec![1.0]
        }
    } else {
        etas.iter()
            .map(|e| match e {
                EtaArg::Value(v) => *v,
                EtaArg::Table => default_eta(method),
            })
            .collect()
    };
    out.dedup();
    out
}

#[derive(Serialize)]
struct CoverageCsvRow {
    system: String,
    k: usize,
    rho_hat: f64,
    stage1_rho: f64,
    stage1_iota: f64,
    eta: f64,
    misses: usize,
    replicates: usize,
    aligned_miss: Option<bool>,
}

pub fn coverage(a: &CoverageArgs) -> sapstop::Result<Outcome> {
    let pre = reference(&a.common);
    let generators = if !a.generators.is_empty() {
        a.generators.clone()
    } else if pre {
        vec![DepotMatrix::Golub, DepotMatrix::Wilkinson, DepotMatrix::Rohess]
    } else {
        vec![DepotMatrix::RandUniform]
    };
    let method = a.method.unwrap_or(SketchMethod::Gaussian);
    let n = pick(a.n, pre, 128, 64);
    let p = pick(a.p, pre, 25, 16);
    let cfg = CoverageConfig {
        n_iters: pick(a.iters, pre, 300, 100),
        lambda: pick(a.lambda, pre, 15, 15),
        n_replicates: pick(a.replicates, pre, 100, 50),
        alpha: a.alpha.unwrap_or(0.05),
        etas: eta_values(&a.eta, method, pre),
    };
    let rng = RngHandle::new(a.common.seed);
    let mut rows = Vec::new();
    let mut systems = Vec::new();
    let mut totals = vec![(0usize, 0usize); cfg.etas.len()];
    for (i, &generator) in generators.iter().enumerate() {
        let sc = SystemConfig {
            generator,
            n,
            method,
            p,
        };
        let h = rng.derive(i as u64);
        let src = sc.build(h.derive(0))?;
        let rep = two_stage_coverage(
            &src,
            Vector::zeros(n),
            Arc::new(InnerProduct::Identity),
            &cfg,
            h.derive(1),
        )?;
        for (t, e) in totals.iter_mut().zip(&rep.per_eta) {
            t.0 += e.misses;
            t.1 += e.comparisons;
        }
        for row in &rep.rows {
            for (j, &eta) in cfg.etas.iter().enumerate() {
                rows.push(CoverageCsvRow {
                    system: sc.label(),
                    k: row.k,
                    rho_hat: row.rho_hat,
                    stage1_rho: row.stage1_rho,
                    stage1_iota: row.stage1_iota,
                    eta,
                    misses: row.misses[j],
                    replicates: cfg.n_replicates,
                    aligned_miss: row.aligned_miss[j],
                });
            }
        }
        systems.push(json!({ "system": sc.label(), "se": rep.se, "per_eta": rep.per_eta }));
    }
    let mut rates = BTreeMap::new();
    for (&eta, &(m, c)) in cfg.etas.iter().zip(&totals) {
        rates.insert(format!("eta={eta}"), m as f64 / c as f64);
    }
    let passed = rates.values().all(|&r| r <= cfg.alpha);
    Ok(Outcome {
        summary: summary(
            "coverage",
            a.common.seed,
            passed,
            predicate_exit(passed),
            format!("pooled failure rate <= alpha = {} for every eta", cfg.alpha),
            json!({ "generators": generators, "n": n, "method": method, "p": p, "coverage": cfg }),
            rates,
            None,
            json!({ "systems": systems }),
        ),
        outputs: vec![Output {
            suffix: None,
            csv: rows_csv(&rows)?,
        }],
        final_x: None,
    })
}

struct Suite {
    systems: Vec<SystemConfig>,
    runs: usize,
    iters: usize,
    lambda: usize,
}

fn suite(s: &SuiteArgs, pre: bool) -> Suite {
    let generators = if s.generators.is_empty() {
        DepotMatrix::ALL.to_vec()
    } else {
        s.generators.clone()
    };
    let methods = if s.method.is_empty() {
        SketchMethod::JL.to_vec()
    } else {
        s.method.clone()
    };
    let n = pick(s.n, pre, 128, 64);
    let p = pick(s.p, pre, 25, 16);
    let mut systems = Vec::new();
    for &generator in &generators {
        for &method in &methods {
            systems.push(SystemConfig {
                generator,
                n,
                method,
                p,
            });
        }
    }
    Suite {
        systems,
        runs: pick(s.runs, pre, 1, 1),
        iters: pick(s.iters, pre, 300, 300),
        lambda: pick(s.lambda, pre, 15, 15),
    }
}

#[derive(Serialize)]
struct ConsistencyCsvRow {
    k: usize,
    p5: f64,
    p50: f64,
    p95: f64,
}

pub fn consistency(a: &ConsistencyArgs) -> sapstop::Result<Outcome> {
    let pre = reference(&a.common);
    let s = suite(&a.suite, pre);
    let skip = a.skip.unwrap_or(20);
    let band = a.band.unwrap_or(10.0);
    let mut opts = RunOptions::new(s.lambda, s.lambda, s.iters, StoppingParams::reference())?;
    opts.run_to_max = true;
    let rng = RngHandle::new(a.common.seed);
    let mut traces = Vec::new();
    for (i, sc) in s.systems.iter().enumerate() {
        let src = sc.build(rng.derive(i as u64))?;
        let scale = src
            .expectation_scale()
            .ok_or(Error::MissingGroundTruth("consistency"))?;
        for r in 0..s.runs {
            let mut run_src = src.reseeded(rng.derive(i as u64).derive(2 + r as u64));
            let se = run_src.se_params();
            let t = run_tracked_solve(
                &mut run_src,
                Vector::zeros(sc.n),
                Arc::new(InnerProduct::Identity),
                se,
                &opts,
            )?;
            traces.push((t, scale));
        }
    }
    let cells = consistency_from_traces(&traces)?;
    let rep = consistency_report(&cells, &[5.0, 50.0, 95.0], skip)?;
    let rows: Vec<ConsistencyCsvRow> = (0..rep.curves[0].len())
        .map(|k| ConsistencyCsvRow {
            k: k + 1,
            p5: rep.curves[0][k],
            p50: rep.curves[1][k],
            p95: rep.curves[2][k],
        })
        .collect();
    let median_band = rep.boundedness[1];
    let passed = median_band <= band;
    let mut rates = BTreeMap::new();
    rates.insert("median_max_over_median".into(), median_band);
    Ok(Outcome {
        summary: summary(
            "consistency",
            a.common.seed,
            passed,
            predicate_exit(passed),
            format!("median relative-error curve stays within a {band}x band after iteration {skip}"),
            json!({ "systems": s.systems, "runs": s.runs, "iters": s.iters, "lambda": s.lambda, "skip": skip, "band": band }),
            rates,
            None,
            json!({ "n_cells": rep.n_cells, "percentiles": rep.percentiles, "boundedness": rep.boundedness }),
        ),
        outputs: vec![Output {
            suffix: None,
            csv: rows_csv(&rows)?,
        }],
        final_x: None,
    })
}

#[derive(Serialize)]
struct StoppingCsvRow {
    system: String,
    run: usize,
    n_iters: usize,
    n_eligible: usize,
    late: usize,
    early: usize,
    first_stop: Option<usize>,
}

pub fn stopping(a: &StoppingArgs) -> sapstop::Result<Outcome> {
    let pre = reference(&a.common);
    let s = suite(&a.suite, pre);
    let rng = RngHandle::new(a.common.seed);
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut params = None;
    for (i, sc) in s.systems.iter().enumerate() {
        let stop = stopping_params(&a.stop, Some(sc.method), StoppingParams::reference())?;
        params.get_or_insert(stop);
        let opts = RunOptions::new(s.lambda, s.lambda, s.iters, stop)?;
        let src = sc.build(rng.derive(i as u64))?;
        for r in 0..s.runs {
            let h = rng.derive(i as u64).derive(2 + r as u64);
            let (run, _) = stopping_error_rates(&src, Vector::zeros(sc.n), Arc::new(InnerProduct::Identity), &opts, h)?;
            rows.push(StoppingCsvRow {
                system: sc.label(),
                run: r,
                n_iters: run.n_iters,
                n_eligible: run.n_eligible,
                late: run.late,
                early: run.early,
                first_stop: run.first_stop,
            });
            runs.push(run);
        }
    }
    let params = params.ok_or(Error::Empty("stopping suite"))?;
    let report = StoppingReport::from_runs(params, runs);
    let passed = report
        .runs
        .iter()
        .all(|r| r.late_rate <= params.xi_i && r.early_rate <= params.xi_ii);
    let mut rates = BTreeMap::new();
    rates.insert("late".into(), report.late_rate);
    rates.insert("early".into(), report.early_rate);
    Ok(Outcome {
        summary: summary(
            "stopping",
            a.common.seed,
            passed,
            predicate_exit(passed),
            format!(
                "late rate <= xi_i = {} and early rate <= xi_ii = {} in every run",
                params.xi_i, params.xi_ii
            ),
            json!({ "systems": s.systems, "runs": s.runs, "iters": s.iters, "lambda": s.lambda, "params": params }),
            rates,
            None,
            json!({ "n_eligible": report.n_eligible, "late": report.late, "early": report.early }),
        ),
        outputs: vec![Output {
            suffix: None,
            csv: rows_csv(&rows)?,
        }],
        final_x: None,
    })
}

pub fn collocation(a: &CollocationArgs) -> sapstop::Result<Outcome> {
    let d = CollocationConfig::default();
    let cfg = CollocationConfig {
        eps: a.eps.unwrap_or(d.eps),
        p: a.p.unwrap_or(d.p),
        lambda1: a.lambda1.unwrap_or(d.lambda1),
        lambda2: a.lambda2.unwrap_or(d.lambda2),
        max_iters: a.max_iters.unwrap_or(d.max_iters),
        stopping: stopping_params(&a.stop, None, d.stopping)?,
        n_cond_replicates: a.replicates.unwrap_or(d.n_cond_replicates),
        sigma_window: a.sigma_window.unwrap_or(d.sigma_window),
        sigma_min_samples: d.sigma_min_samples,
    };
    let rep = collocation_experiment(&cfg, RngHandle::new(a.common.seed))?;
    let alpha = cfg.stopping.alpha;
    let passed = rep.coverage >= 1.0 - alpha && rep.late == 0 && rep.early == 0;
    let mut rates = BTreeMap::new();
    rates.insert("coverage_failure".into(), 1.0 - rep.coverage);
    rates.insert(
        "late".into(),
        if rep.n_eligible == 0 {
            0.0
        } else {
            rep.late as f64 / rep.n_eligible as f64
        },
    );
    rates.insert(
        "early".into(),
        if rep.n_eligible == 0 {
            0.0
        } else {
            rep.early as f64 / rep.n_eligible as f64
        },
    );
    let results = json!({
        "n_cols": rep.n_cols,
        "sigma_min": rep.sigma_min,
        "sigma_theory": rep.sigma_theory,
        "sigma_empirical": rep.sigma_empirical,
        "coverage": rep.coverage,
        "coverage_after_window": rep.coverage_after_window,
        "n_eligible": rep.n_eligible,
        "late": rep.late,
        "early": rep.early,
    });
    Ok(Outcome {
        summary: summary(
            "collocation",
            a.common.seed,
            passed,
            predicate_exit(passed),
            format!("coverage >= {} and no stopping errors", 1.0 - alpha),
            serde_json::to_value(&cfg)?,
            rates,
            rep.stop_iteration,
            results,
        ),
        outputs: vec![
            Output {
                suffix: None,
                csv: rows_csv(&rep.rows)?,
            },
            Output {
                suffix: Some("_trace"),
                csv: trace_csv(&rep.trace.records)?,
            },
        ],
        final_x: None,
    })
}

pub fn se_check(a: &SeCheckArgs) -> sapstop::Result<Outcome> {
    let method = a.method.unwrap_or(SketchMethod::Gaussian);
    let m = a.m.unwrap_or(256);
    let p = a.p.unwrap_or(25);
    let samples = a.samples.unwrap_or(10_000);
    let grid = if a.delta.is_empty() {
        vec![0.5, 1.0, 2.0]
    } else {
        a.delta.clone()
    };
    let check = sketch_tail_check(method, m, p, samples, &grid, RngHandle::new(a.common.seed))?;
    let passed = check.passed();
    let mut rates = BTreeMap::new();
    for r in &check.report.rows {
        rates.insert(format!("tail@{}", r.delta), r.upper_freq.max(r.lower_freq));
    }
    Ok(Outcome {
        summary: summary(
            "se-check",
            a.common.seed,
            passed,
            predicate_exit(passed),
            "every tail frequency within bound + slack and every sample inside the known support".into(),
            json!({ "method": method, "m": m, "p": p, "samples": samples, "delta": grid }),
            rates,
            None,
            json!({
                "params": check.params,
                "min_sample": check.min_sample,
                "max_sample": check.max_sample,
                "support": check.support,
                "outside_support": check.outside_support,
            }),
        ),
        outputs: vec![Output {
            suffix: None,
            csv: rows_csv(&check.report.rows)?,
        }],
        final_x: None,
    })
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter { .. } | Error::Unknown { .. } => EXIT_USAGE,
        Error::Io(_) => EXIT_IO,
        Error::Csv(c) if c.is_io_error() => EXIT_IO,
        _ => EXIT_ERROR,
    }
}

pub fn describe(e: &Error) -> String {
    match e {
        Error::InvalidParameter { name, reason } => format!("invalid value for --{}: {reason}", name.replace('_', "-")),
        other => other.to_string(),
    }
}
