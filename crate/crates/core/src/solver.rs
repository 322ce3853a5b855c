//! Sketch-and-project update
//! `x ← x − B⁻¹Ãᵀ(ÃB⁻¹Ãᵀ)†(Ãx − b̃)`.

use std::sync::Arc;

use crate::error::{mismatch, Error, Result};
use crate::numerics::{axpy, dot, norm_sq, pinv_apply, DenseMatrix, InnerProduct, Vector};
use crate::streams::Observation;

/// Smallest Cholesky pivot, relative to `p·ε·max diag`, accepted before falling
/// back to the eigen-based pseudo-inverse.
const CHOLESKY_PIVOT_FACTOR: f64 = 1e3;

#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vector,
    inner: Arc<InnerProduct>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// `Ã x_k − b̃` at the pre-update iterate.
    pub r_tilde: Vec<f64>,
    pub r_norm_sq: f64,
}

impl SolverState {
    pub fn new(x0: Vector, inner: Arc<InnerProduct>) -> Result<Self> {
        inner.check_dim(x0.len())?;
        Ok(Self { x: x0, inner, k: 0 })
    }

    pub fn with_identity(x0: Vector) -> Self {
        Self {
            x: x0,
            inner: Arc::new(InnerProduct::Identity),
            k: 0,
        }
    }

    pub fn inner(&self) -> &Arc<InnerProduct> {
        &self.inner
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn step(&mut self, obs: &Observation) -> Result<StepOutput> {
        let a = &obs.a_tilde;
        if a.cols() != self.x.len() {
            return Err(mismatch("observation columns", self.x.len(), a.cols()));
        }
        if a.rows() != obs.b_tilde.len() {
            return Err(mismatch("observation rows", a.rows(), obs.b_tilde.len()));
        }
        let mut r = a.matvec(&self.x)?;
        for (ri, bi) in r.iter_mut().zip(obs.b_tilde.iter()) {
            *ri -= bi;
        }
        let r_norm_sq = norm_sq(&r);
        if !r_norm_sq.is_finite() {
            return Err(Error::NonFinite("sketched residual"));
        }
        self.k += 1;
        if r_norm_sq == 0.0 {
            return Ok(StepOutput { r_tilde: r, r_norm_sq });
        }

        match self.inner.as_ref() {
            InnerProduct::Identity => {
                let u = gram_solve(&a.gram_rows(), &r)?;
                for (i, ui) in u.iter().enumerate() {
                    axpy(-ui, a.row(i), &mut self.x);
                }
            }
            InnerProduct::Explicit { b_inv, .. } => {
                // rows of W are B⁻¹aᵢ, so W = ÃB⁻¹ and G = WÃᵀ
                let w = a.matmul(b_inv)?;
                let p = a.rows();
                let g = DenseMatrix::from_fn(p, p, |i, j| dot(w.row(i), a.row(j)));
                let g = symmetrize(g);
                let u = gram_solve(&g, &r)?;
                for (i, ui) in u.iter().enumerate() {
                    axpy(-ui, w.row(i), &mut self.x);
                }
            }
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("iterate"));
        }
        Ok(StepOutput { r_tilde: r, r_norm_sq })
    }
}

fn symmetrize(mut g: DenseMatrix) -> DenseMatrix {
    let p = g.rows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (g.get(i, j) + g.get(j, i));
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    g
}

/// `G† r` for a PSD Gram matrix: Cholesky when `G` is safely nonsingular,
/// the eigen pseudo-inverse otherwise.
pub fn gram_solve(g: &DenseMatrix, r: &[f64]) -> Result<Vec<f64>> {
    cholesky_solve(g, r).map_or_else(|| pinv_apply(g, r), Ok)
}

fn cholesky_solve(g: &DenseMatrix, r: &[f64]) -> Option<Vec<f64>> {
    let p = g.rows();
    let max_diag = (0..p).map(|i| g.get(i, i)).fold(0.0f64, f64::max);
    if !(max_diag > 0.0) {
        return None;
    }
    let floor = CHOLESKY_PIVOT_FACTOR * p as f64 * f64::EPSILON * max_diag;
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let lj = &l[j * p..j * p + j];
        let d = g.get(j, j) - dot(lj, lj);
        if !(d > floor) {
            return None;
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in j + 1..p {
            let s = g.get(i, j) - dot(&l[i * p..i * p + j], &l[j * p..j * p + j]);
            l[i * p + j] = s / djj;
        }
    }
    let mut y = r.to_vec();
    for i in 0..p {
        let s = dot(&l[i * p..i * p + i], &y[..i]);
        y[i] = (y[i] - s) / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    Some(y)
}
