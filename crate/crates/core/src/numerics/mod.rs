//! Dense linear algebra and random-stream plumbing shared by every other module.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{
    b_norm, pinv_apply, spd_eigen, spectral_matrix, squared_spectral_norm, symmetric_eigen,
    symmetric_sqrt_inverse_apply, SymmetricEigen, SYMMETRY_TOL,
};
pub use matrix::{axpy, dot, norm_sq, sub, DenseMatrix, Vector};
pub use rng::{RngHandle, SimRng};

use crate::error::{mismatch, Result};

/// The inner product of the iteration, carried as `B⁻¹` together with the
/// derived `B` and `B^{-1/2}` needed for error norms and `M` estimates.
#[derive(Debug, Clone, PartialEq)]
pub enum InnerProduct {
    Identity,
    Explicit {
        b_inv: DenseMatrix,
        b: DenseMatrix,
        b_inv_sqrt: DenseMatrix,
    },
}

impl InnerProduct {
    /// Validates `b_inv` as SPD and precomputes `B` and `B^{-1/2}`.
    pub fn from_b_inv(b_inv: DenseMatrix) -> Result<Self> {
        let eig = spd_eigen(&b_inv)?;
        let b = spectral_matrix(&eig, |l| 1.0 / l);
        let b_inv_sqrt = spectral_matrix(&eig, f64::sqrt);
        Ok(Self::Explicit { b_inv, b, b_inv_sqrt })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, InnerProduct::Identity)
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            InnerProduct::Identity => None,
            InnerProduct::Explicit { b_inv, .. } => Some(b_inv.rows()),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != n => Err(mismatch("inner product dimension", n, d)),
            _ => Ok(()),
        }
    }

    /// `‖x‖_B`.
    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        match self {
            InnerProduct::Identity => b_norm(x, None),
            InnerProduct::Explicit { b, .. } => b_norm(x, Some(b)),
        }
    }

    /// `A B^{-1/2}` (row-wise `B^{-1/2} aᵢ`, using symmetry of `B^{-1/2}`).
    pub fn right_sqrt_inv(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            InnerProduct::Identity => Ok(a.clone()),
            InnerProduct::Explicit { b_inv_sqrt, .. } => a.matmul(b_inv_sqrt),
        }
    }
}
