//! Random sketching operators `S` (applied as `Sᵀ`) and their action on systems.
//!
//! - Gaussian: i.i.d. `N(0, 1/p)` entries.
//! - Achlioptas: `√(3/p)·s` with `s ∈ {+1, 0, −1}` at probabilities `(1/6, 2/3, 1/6)`.
//! - FJLT: subsampled randomized Hadamard transform `√(m_pad/p)·P·H·D` on the
//!   zero-padded input, `P` sampling `p` coordinates with replacement.
//! - Row subset: `p` distinct rows chosen uniformly.
//!
//! All scalings give `E‖Sᵀx‖² = ‖x‖²` (row subsets: `(p/m)‖x‖²`).

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, mismatch, Result};
use crate::numerics::{DenseMatrix, SimRng, Vector};
use crate::streams::Observation;
use crate::subexp::SketchMethod;

#[derive(Debug, Clone, PartialEq)]
enum Realization {
    /// `Sᵀ` as a dense `p × m` matrix.
    Dense(DenseMatrix),
    Hadamard {
        signs: Vec<f64>,
        rows: Vec<usize>,
    },
    Subset(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchOperator {
    method: SketchMethod,
    m: usize,
    p: usize,
    realization: Realization,
}

/// Unnormalized in-place Walsh–Hadamard transform; `data.len()` must be a power of two.
pub fn fwht(data: &mut [f64]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "fwht length must be a power of two");
    let mut h = 1;
    while h < n {
        for block in data.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// Orthonormal Walsh–Hadamard transform of `x` zero-padded to the next power of two.
pub fn hadamard_orthonormal(x: &[f64]) -> Vec<f64> {
    let m_pad = x.len().max(1).next_power_of_two();
    let mut buf = x.to_vec();
    buf.resize(m_pad, 0.0);
    fwht(&mut buf);
    let s = 1.0 / (m_pad as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

/// Row-block version of [`fwht`]: transforms each column of a row-major `m_pad × w` buffer.
fn fwht_rows(data: &mut [f64], m_pad: usize, w: usize) {
    debug_assert_eq!(data.len(), m_pad * w);
    let mut h = 1;
    while h < m_pad {
        for block in data.chunks_mut(2 * h * w) {
            let (lo, hi) = block.split_at_mut(h * w);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

impl SketchOperator {
    /// Draws a fresh operator mapping `m`-vectors to `p`-vectors.
    pub fn draw(method: SketchMethod, m: usize, p: usize, rng: &mut SimRng) -> Result<Self> {
        if m < 1 {
            return Err(invalid("m", "source dimension must be >= 1"));
        }
        if p < 1 {
            return Err(invalid("p", "target dimension must be >= 1"));
        }
        let realization = match method {
            SketchMethod::Gaussian => {
                let s = 1.0 / (p as f64).sqrt();
                let data = (0..p * m).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect();
                Realization::Dense(DenseMatrix::from_raw(p, m, data))
            }
            SketchMethod::Achlioptas => {
                let s = (3.0 / p as f64).sqrt();
                let data = (0..p * m)
                    .map(|_| {
                        let u: f64 = rng.random();
                        if u < 1.0 / 6.0 {
                            s
                        } else if u < 1.0 / 3.0 {
                            -s
                        } else {
                            0.0
                        }
                    })
                    .collect();
                Realization::Dense(DenseMatrix::from_raw(p, m, data))
            }
            SketchMethod::Fjlt => {
                let m_pad = m.next_power_of_two();
                let signs = (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
                let rows = (0..p).map(|_| rng.random_range(0..m_pad)).collect();
                Realization::Hadamard { signs, rows }
            }
            SketchMethod::RowSubset => {
                if p > m {
                    return Err(invalid("p", format!("row subset needs p <= m = {m}, got {p}")));
                }
                Realization::Subset(index::sample(rng, m, p).into_vec())
            }
        };
        Ok(Self {
            method,
            m,
            p,
            realization,
        })
    }

    /// FJLT operator with given signs and sampled rows (for hand-checked tests).
    pub fn fjlt_from_parts(m: usize, signs: Vec<f64>, rows: Vec<usize>) -> Result<Self> {
        let m_pad = m.next_power_of_two();
        if signs.len() != m {
            return Err(mismatch("fjlt signs", m, signs.len()));
        }
        if rows.iter().any(|&r| r >= m_pad) || rows.is_empty() {
            return Err(invalid("rows", format!("indices must lie in 0..{m_pad}")));
        }
        Ok(Self {
            method: SketchMethod::Fjlt,
            m,
            p: rows.len(),
            realization: Realization::Hadamard { signs, rows },
        })
    }

    /// Row-subset operator selecting `indices` (0-based) in order.
    pub fn row_subset_from_indices(m: usize, indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; m];
        for &i in &indices {
            if i >= m || std::mem::replace(&mut seen[i], true) {
                return Err(invalid("indices", "must be distinct members of 0..m"));
            }
        }
        if indices.is_empty() {
            return Err(invalid("indices", "must be nonempty"));
        }
        Ok(Self {
            method: SketchMethod::RowSubset,
            m,
            p: indices.len(),
            realization: Realization::Subset(indices),
        })
    }

    pub fn method(&self) -> SketchMethod {
        self.method
    }

    pub fn source_dim(&self) -> usize {
        self.m
    }

    pub fn target_dim(&self) -> usize {
        self.p
    }

    /// Padded Hadamard size (FJLT) or `m` otherwise.
    pub fn padded_dim(&self) -> usize {
        match self.realization {
            Realization::Hadamard { .. } => self.m.next_power_of_two(),
            _ => self.m,
        }
    }

    /// Selected row indices for row-subset operators.
    pub fn subset_indices(&self) -> Option<&[usize]> {
        match &self.realization {
            Realization::Subset(idx) => Some(idx),
            _ => None,
        }
    }

    /// Dense `Sᵀ` for Gaussian and Achlioptas operators.
    pub fn dense_transpose(&self) -> Option<&DenseMatrix> {
        match &self.realization {
            Realization::Dense(st) => Some(st),
            _ => None,
        }
    }

    /// `Sᵀ x`.
    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.m {
            return Err(mismatch("sketch apply_vec", self.m, x.len()));
        }
        Ok(match &self.realization {
            Realization::Dense(st) => st.matvec(x)?,
            Realization::Subset(idx) => idx.iter().map(|&i| x[i]).collect(),
            Realization::Hadamard { signs, rows } => {
                let m_pad = self.padded_dim();
                let mut buf = vec![0.0; m_pad];
                for (b, (xi, s)) in buf.iter_mut().zip(x.iter().zip(signs)) {
                    *b = xi * s;
                }
                fwht(&mut buf);
                let scale = 1.0 / (self.p as f64).sqrt();
                rows.iter().map(|&r| scale * buf[r]).collect()
            }
        })
    }

    /// `(Sᵀ A, Sᵀ b)`.
    pub fn apply(&self, a: &DenseMatrix, b: &[f64]) -> Result<Observation> {
        if a.rows() != self.m {
            return Err(mismatch("sketch apply (rows of A)", self.m, a.rows()));
        }
        if b.len() != self.m {
            return Err(mismatch("sketch apply (length of b)", self.m, b.len()));
        }
        let (a_tilde, b_tilde) = match &self.realization {
            Realization::Dense(st) => (st.matmul(a)?, st.matvec(b)?),
            Realization::Subset(idx) => (a.select_rows(idx), idx.iter().map(|&i| b[i]).collect()),
            Realization::Hadamard { signs, rows } => {
                let n = a.cols();
                let w = n + 1;
                let m_pad = self.padded_dim();
                let mut buf = vec![0.0; m_pad * w];
                for i in 0..self.m {
                    let s = signs[i];
                    let dst = &mut buf[i * w..(i + 1) * w];
                    for (d, v) in dst[..n].iter_mut().zip(a.row(i)) {
                        *d = s * v;
                    }
                    dst[n] = s * b[i];
                }
                fwht_rows(&mut buf, m_pad, w);
                let scale = 1.0 / (self.p as f64).sqrt();
                let mut at = Vec::with_capacity(self.p * n);
                let mut bt = Vec::with_capacity(self.p);
                for &r in rows {
                    let src = &buf[r * w..(r + 1) * w];
                    at.extend(src[..n].iter().map(|v| scale * v));
                    bt.push(scale * src[n]);
                }
                (DenseMatrix::from_raw(self.p, n, at), bt)
            }
        };
        Ok(Observation {
            a_tilde,
            b_tilde: Vector::from_raw(b_tilde),
        })
    }
}
