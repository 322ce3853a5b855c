//! Sources of i.i.d. observations `(Ã_k, b̃_k)`.
//!
//! A [`StreamSource`] owns its random stream. Replicates of the same source are
//! made with [`StreamSource::reseeded`], which shares the underlying system.

mod collocation;
mod depot;

use std::sync::Arc;

pub use collocation::{
    boundary_value, collocation_from_controls, collocation_stream, control_grid, estimate_gram_sigma_min, quadric_rbf,
    quadric_rbf_laplacian, sample_cube_point, source_term, CubePoint, Region, DEFAULT_SIGMA_MIN_SAMPLES,
};
pub use depot::{depot_matrix, DepotMatrix};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::numerics::{norm_sq, DenseMatrix, RngHandle, SimRng, Vector};
use crate::sketch::SketchOperator;
use crate::subexp::{row_subset_params, se_from_jl, SketchMethod, SubExpParams};

/// Consistency tolerance for a supplied solution: `‖Ax* − b‖ ≤ 1e-10·(1 + ‖b‖)`.
pub const CONSISTENCY_TOL: f64 = 1e-10;

/// One streamed pair `(Ã, b̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub a_tilde: DenseMatrix,
    pub b_tilde: Vector,
}

impl Observation {
    pub fn new(a_tilde: DenseMatrix, b_tilde: Vector) -> Result<Self> {
        if a_tilde.rows() != b_tilde.len() {
            return Err(mismatch("observation rows", a_tilde.rows(), b_tilde.len()));
        }
        Ok(Self { a_tilde, b_tilde })
    }

    /// `‖Ã x − b̃‖²`.
    pub fn residual_norm_sq(&self, x: &[f64]) -> Result<f64> {
        let ax = self.a_tilde.matvec(x)?;
        Ok(ax.iter().zip(self.b_tilde.iter()).map(|(u, v)| (u - v) * (u - v)).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    SketchedSystem,
    RowSubset,
    Collocation,
}

/// A consistent system `A x* = b` with its solution.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub a: DenseMatrix,
    pub b: Vector,
    pub x_star: Vector,
}

impl GroundTruth {
    /// Validates `A x* = b` to [`CONSISTENCY_TOL`].
    pub fn new(a: DenseMatrix, b: Vector, x_star: Vector) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(mismatch("ground truth rows", a.rows(), b.len()));
        }
        let ax = a.matvec(&x_star)?;
        let res = norm_sq(&crate::numerics::sub(&ax, &b)).sqrt();
        let scale = 1.0 + norm_sq(&b).sqrt();
        if res > CONSISTENCY_TOL * scale {
            return Err(invalid(
                "b",
                format!("system is inconsistent with x*: ‖Ax*−b‖ = {res:e}"),
            ));
        }
        Ok(Self { a, b, x_star })
    }

    /// Builds `b = A x*`.
    pub fn from_solution(a: DenseMatrix, x_star: Vector) -> Result<Self> {
        let b = Vector::new(a.matvec(&x_star)?)?;
        Ok(Self { a, b, x_star })
    }

    /// `‖A x − b‖²`.
    pub fn residual_norm_sq(&self, x: &[f64]) -> Result<f64> {
        let ax = self.a.matvec(x)?;
        Ok(ax.iter().zip(self.b.iter()).map(|(u, v)| (u - v) * (u - v)).sum())
    }
}

#[derive(Debug, Clone)]
struct System {
    a: DenseMatrix,
    b: Vector,
    x_star: Option<Vector>,
}

#[derive(Debug, Clone)]
enum Generator {
    Sketched { system: Arc<System>, method: SketchMethod },
    Collocation { controls: Arc<Vec<[f64; 3]>> },
}

#[derive(Debug, Clone)]
pub struct StreamSource {
    kind: StreamKind,
    generator: Generator,
    se_params: SubExpParams,
    n: usize,
    p: usize,
    rng: SimRng,
}

fn check_system(a: &DenseMatrix, b: &Vector, x_star: Option<&Vector>) -> Result<()> {
    if a.rows() != b.len() {
        return Err(mismatch("system rows", a.rows(), b.len()));
    }
    if let Some(xs) = x_star {
        GroundTruth::new(a.clone(), b.clone(), xs.clone())?;
    }
    Ok(())
}

/// Repeated independent JL sketches `(SᵀA, Sᵀb)` of a fixed system.
pub fn sketched_system_stream(
    a: DenseMatrix,
    b: Vector,
    x_star: Option<Vector>,
    method: SketchMethod,
    p: usize,
    rng: RngHandle,
) -> Result<StreamSource> {
    if method == SketchMethod::RowSubset {
        return row_subset_stream(a, b, x_star, p, rng);
    }
    if p < 1 {
        return Err(invalid("p", "must be >= 1"));
    }
    check_system(&a, &b, x_star.as_ref())?;
    let n = a.cols();
    Ok(StreamSource {
        kind: StreamKind::SketchedSystem,
        se_params: se_from_jl(method, p)?,
        n,
        p,
        rng: rng.rng(),
        generator: Generator::Sketched {
            system: Arc::new(System { a, b, x_star }),
            method,
        },
    })
}

/// Uniform random `p`-row subsets of a fixed system.
pub fn row_subset_stream(
    a: DenseMatrix,
    b: Vector,
    x_star: Option<Vector>,
    p: usize,
    rng: RngHandle,
) -> Result<StreamSource> {
    check_system(&a, &b, x_star.as_ref())?;
    let se_params = row_subset_params(a.rows(), p)?;
    let n = a.cols();
    Ok(StreamSource {
        kind: StreamKind::RowSubset,
        se_params,
        n,
        p,
        rng: rng.rng(),
        generator: Generator::Sketched {
            system: Arc::new(System { a, b, x_star }),
            method: SketchMethod::RowSubset,
        },
    })
}

impl StreamSource {
    pub(crate) fn collocation(controls: Vec<[f64; 3]>, p: usize, se_params: SubExpParams, rng: RngHandle) -> Self {
        Self {
            kind: StreamKind::Collocation,
            n: controls.len(),
            p,
            se_params,
            rng: rng.rng(),
            generator: Generator::Collocation {
                controls: Arc::new(controls),
            },
        }
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    /// Column dimension of every observation.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Rows per observation.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Row count of the underlying system (sketched and row-subset streams).
    pub fn m(&self) -> Option<usize> {
        match &self.generator {
            Generator::Sketched { system, .. } => Some(system.a.rows()),
            Generator::Collocation { .. } => None,
        }
    }

    pub fn method(&self) -> Option<SketchMethod> {
        match &self.generator {
            Generator::Sketched { method, .. } => Some(*method),
            Generator::Collocation { .. } => None,
        }
    }

    pub fn se_params(&self) -> SubExpParams {
        self.se_params
    }

    pub fn set_se_params(&mut self, se: SubExpParams) {
        self.se_params = se;
    }

    /// Collocation control points.
    pub fn controls(&self) -> Option<&[[f64; 3]]> {
        match &self.generator {
            Generator::Collocation { controls } => Some(controls),
            Generator::Sketched { .. } => None,
        }
    }

    /// The underlying `(A, b)` of sketched and row-subset streams.
    pub fn system(&self) -> Option<(&DenseMatrix, &Vector)> {
        match &self.generator {
            Generator::Sketched { system, .. } => Some((&system.a, &system.b)),
            Generator::Collocation { .. } => None,
        }
    }

    pub fn x_star(&self) -> Option<&Vector> {
        match &self.generator {
            Generator::Sketched { system, .. } => system.x_star.as_ref(),
            Generator::Collocation { .. } => None,
        }
    }

    /// Same source (sharing the system) on a fresh random stream.
    pub fn reseeded(&self, rng: RngHandle) -> Self {
        Self {
            rng: rng.rng(),
            ..self.clone()
        }
    }

    /// `‖A x − b‖²` for sketched and row-subset streams.
    pub fn full_residual_norm_sq(&self, x: &[f64]) -> Result<Option<f64>> {
        match &self.generator {
            Generator::Sketched { system, .. } => {
                let ax = system.a.matvec(x)?;
                Ok(Some(
                    ax.iter().zip(system.b.iter()).map(|(u, v)| (u - v) * (u - v)).sum(),
                ))
            }
            Generator::Collocation { .. } => Ok(None),
        }
    }

    /// `E‖Ã − b̃‖²` relative to `‖Ax − b‖²`: 1 for JL sketches, `p/m` for row subsets.
    pub fn expectation_scale(&self) -> Option<f64> {
        match &self.generator {
            Generator::Sketched { method, system } => Some(match method {
                SketchMethod::RowSubset => self.p as f64 / system.a.rows() as f64,
                _ => 1.0,
            }),
            Generator::Collocation { .. } => None,
        }
    }

    /// Exact `E[‖Ã x − b̃‖²]` where it is known in closed form.
    pub fn conditional_expectation(&self, x: &[f64]) -> Result<Option<f64>> {
        Ok(match (self.full_residual_norm_sq(x)?, self.expectation_scale()) {
            (Some(r), Some(s)) => Some(r * s),
            _ => None,
        })
    }

    pub fn next_observation(&mut self) -> Result<Observation> {
        match &self.generator {
            Generator::Sketched { system, method } => {
                let s = SketchOperator::draw(*method, system.a.rows(), self.p, &mut self.rng)?;
                s.apply(&system.a, &system.b)
            }
            Generator::Collocation { controls } => {
                let n = controls.len();
                let mut a = Vec::with_capacity(self.p * n);
                let mut b = Vec::with_capacity(self.p);
                for _ in 0..self.p {
                    let pt = sample_cube_point(&mut self.rng);
                    collocation::push_row(&pt, controls, &mut a, &mut b);
                }
                Ok(Observation {
                    a_tilde: DenseMatrix::from_raw(self.p, n, a),
                    b_tilde: Vector::from_raw(b),
                })
            }
        }
    }

    /// Raw access for callers that need extra draws tied to this stream.
    pub fn rng_mut(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    /// Uniform(0,1) solution with `b = A x*`, as used in the sketched experiments.
    pub fn random_solution(a: &DenseMatrix, rng: &mut SimRng) -> Result<GroundTruth> {
        let x: Vec<f64> = (0..a.cols()).map(|_| rng.random::<f64>()).collect();
        GroundTruth::from_solution(a.clone(), Vector::from_raw(x))
    }
}
