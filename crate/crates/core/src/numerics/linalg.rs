//! Symmetric eigendecomposition and the operators built on it.

use super::matrix::{dot, DenseMatrix};
use crate::error::{mismatch, Error, Result};

/// Relative asymmetry accepted by [`pinv_apply`].
pub const SYMMETRY_TOL: f64 = 1e-10;

const POWER_MAX_ITERS: usize = 10_000;
const POWER_REL_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix; `vectors` holds one eigenvector per column.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cutoff below which eigenvalues are treated as zero: `dim · ε · max|λ|`.
    pub fn rank_cutoff(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.values.len() as f64 * f64::EPSILON * scale
    }

    /// `V diag(f(λ)) Vᵀ v`.
    pub fn apply_spectral(&self, v: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.values.len();
        let mut out = vec![0.0; n];
        for (k, &lam) in self.values.iter().enumerate() {
            let scale = f(lam);
            if scale == 0.0 {
                continue;
            }
            let coef = scale
                * v.iter()
                    .enumerate()
                    .map(|(i, &vi)| self.vectors.get(i, k) * vi)
                    .sum::<f64>();
            if coef == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o += coef * self.vectors.get(i, k);
            }
        }
        out
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Only the upper triangle is read; callers symmetrize beforehand when needed.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(mismatch(
            "symmetric_eigen",
            "square matrix",
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    let n = a.rows();
    // work on a packed copy for cache friendliness
    let mut m: Vec<f64> = a.as_slice().to_vec();
    for i in 0..n {
        for j in 0..i {
            m[i * n + j] = m[j * n + i];
        }
    }
    let mut v = DenseMatrix::identity(n).into_vec();

    let total: f64 = m.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Ok(SymmetricEigen {
            values: vec![0.0; n],
            vectors: DenseMatrix::identity(n),
        });
    }

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off <= (f64::EPSILON * f64::EPSILON) * total * 1e-2 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let values = (0..n).map(|i| m[i * n + i]).collect();
    Ok(SymmetricEigen {
        values,
        vectors: DenseMatrix::from_raw(n, n, v),
    })
}

fn check_symmetric(g: &DenseMatrix) -> Result<()> {
    if !g.is_square() {
        return Err(mismatch(
            "symmetric matrix",
            "square",
            format!("{}x{}", g.rows(), g.cols()),
        ));
    }
    let asym = g.asymmetry();
    if asym > SYMMETRY_TOL * g.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Minimum-norm solution `G† r` of `G u = r` for a symmetric positive-semidefinite `G`.
///
/// Eigenvalues at or below `p · ε · λ_max` are treated as zero.
pub fn pinv_apply(g: &DenseMatrix, r: &[f64]) -> Result<Vec<f64>> {
    check_symmetric(g)?;
    if r.len() != g.rows() {
        return Err(mismatch("pinv_apply", g.rows(), r.len()));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pinv_apply right-hand side"));
    }
    let eig = symmetric_eigen(g)?;
    let cutoff = eig.rank_cutoff();
    Ok(eig.apply_spectral(r, |lam| if lam > cutoff { 1.0 / lam } else { 0.0 }))
}

/// `‖A‖₂²` by power iteration on the smaller of `AAᵀ`, `AᵀA`.
///
/// Starts from the normalized all-ones vector. If the estimate ends below the
/// largest diagonal entry (a lower bound on `λ_max`), the iteration restarts from
/// the coordinate vector of that entry.
pub fn squared_spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::Empty("squared_spectral_norm"));
    }
    let k = if a.rows() <= a.cols() {
        a.gram_rows()
    } else {
        a.gram_cols()
    };
    let d = k.rows();
    let (jmax, diag_max) =
        (0..d)
            .map(|i| (i, k.get(i, i)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    if diag_max == 0.0 {
        return Ok(0.0);
    }

    let ones = vec![1.0 / (d as f64).sqrt(); d];
    let est = power_iterate(&k, ones)?;
    if est >= diag_max * (1.0 - 1e-12) {
        return Ok(est);
    }
    let mut e = vec![0.0; d];
    e[jmax] = 1.0;
    power_iterate(&k, e)
}

fn power_iterate(k: &DenseMatrix, mut v: Vec<f64>) -> Result<f64> {
    let mut prev = f64::NAN;
    let mut best = 0.0f64;
    for _ in 0..POWER_MAX_ITERS {
        let w = k.matvec(&v)?;
        let rq = dot(&v, &w);
        best = best.max(rq);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        if (rq - prev).abs() <= POWER_REL_TOL * rq.abs() {
            return Ok(rq);
        }
        prev = rq;
        v = w.into_iter().map(|x| x / norm).collect();
    }
    Err(Error::NoConvergence {
        iterations: POWER_MAX_ITERS,
        best,
    })
}

/// `B^{-1/2} v`, where `B^{-1/2}` is the SPD square root of `b_inv`.
pub fn symmetric_sqrt_inverse_apply(b_inv: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    let eig = spd_eigen(b_inv)?;
    if v.len() != b_inv.rows() {
        return Err(mismatch("symmetric_sqrt_inverse_apply", b_inv.rows(), v.len()));
    }
    Ok(eig.apply_spectral(v, f64::sqrt))
}

/// Eigendecomposition that rejects non-SPD input.
pub fn spd_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    check_symmetric(a)?;
    let eig = symmetric_eigen(a)?;
    let min = eig.values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = eig.rank_cutoff();
    if !(min > tol) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(eig)
}

/// `√(xᵀ B x)`; `None` means the identity.
pub fn b_norm(x: &[f64], b: Option<&DenseMatrix>) -> Result<f64> {
    match b {
        None => Ok(dot(x, x).sqrt()),
        Some(b) => {
            let bx = b.matvec(x)?;
            Ok(dot(x, &bx).max(0.0).sqrt())
        }
    }
}

/// Reconstructs `V diag(f(λ)) Vᵀ`.
pub fn spectral_matrix(eig: &SymmetricEigen, f: impl Fn(f64) -> f64) -> DenseMatrix {
    let n = eig.values.len();
    let fl: Vec<f64> = eig.values.iter().map(|&l| f(l)).collect();
    DenseMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| eig.vectors.get(i, k) * fl[k] * eig.vectors.get(j, k))
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn pinv_identity_and_zero() {
        let r = [1.0, 2.0, 3.0];
        assert_eq!(pinv_apply(&DenseMatrix::identity(3), &r).unwrap(), r.to_vec());
        assert_eq!(pinv_apply(&DenseMatrix::zeros(3, 3), &r).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn pinv_singular_diagonal() {
        let u = pinv_apply(&DenseMatrix::from_diag(&[4.0, 0.0]), &[8.0, 5.0]).unwrap();
        assert_relative_eq!(u[0], 2.0, epsilon = 1e-14);
        assert_eq!(u[1], 0.0);
    }

    #[test]
    fn pinv_rejects_bad_input() {
        let g = m(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(pinv_apply(&g, &[1.0, 1.0]), Err(Error::NotSymmetric { .. })));
        assert!(pinv_apply(&DenseMatrix::identity(2), &[1.0]).is_err());
    }

    #[test]
    fn spectral_norm_examples() {
        assert_relative_eq!(
            squared_spectral_norm(&DenseMatrix::identity(2)).unwrap(),
            1.0,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            squared_spectral_norm(&DenseMatrix::from_diag(&[3.0, 1.0])).unwrap(),
            9.0,
            max_relative = 1e-8
        );
        assert_relative_eq!(
            squared_spectral_norm(&m(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap(),
            4.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn spectral_norm_recovers_from_orthogonal_start() {
        // the all-ones start is an eigenvector of AᵀA with eigenvalue 0
        let a = m(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        assert_relative_eq!(squared_spectral_norm(&a).unwrap(), 4.0, max_relative = 1e-8);
    }

    #[test]
    fn sqrt_inverse_examples() {
        assert_eq!(
            symmetric_sqrt_inverse_apply(&DenseMatrix::identity(2), &[1.0, 2.0]).unwrap(),
            vec![1.0, 2.0]
        );
        let u = symmetric_sqrt_inverse_apply(&DenseMatrix::from_diag(&[4.0, 9.0]), &[1.0, 1.0]).unwrap();
        assert_relative_eq!(u[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(u[1], 3.0, epsilon = 1e-14);

        // ‖B^{-1/2} v‖² = vᵀ B⁻¹ v
        let b_inv = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let u = symmetric_sqrt_inverse_apply(&b_inv, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(dot(&u, &u), 2.0, epsilon = 1e-13);
        // closed form: sqrt of [[2,1],[1,2]] = ((√3+1)/2, (√3−1)/2; ...)
        assert_relative_eq!(u[0], (3f64.sqrt() + 1.0) / 2.0, epsilon = 1e-13);
        assert_relative_eq!(u[1], (3f64.sqrt() - 1.0) / 2.0, epsilon = 1e-13);
    }

    #[test]
    fn sqrt_inverse_rejects_indefinite() {
        let err = symmetric_sqrt_inverse_apply(&DenseMatrix::from_diag(&[1.0, -1.0]), &[1.0, 1.0]);
        assert!(matches!(err, Err(Error::NotPositiveDefinite { .. })));
        let err = symmetric_sqrt_inverse_apply(&DenseMatrix::from_diag(&[1.0, 0.0]), &[1.0, 1.0]);
        assert!(matches!(err, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn b_norm_examples() {
        assert_eq!(b_norm(&[3.0, 4.0], None).unwrap(), 5.0);
        assert_eq!(b_norm(&[0.0, 0.0], Some(&DenseMatrix::identity(2))).unwrap(), 0.0);
        assert_relative_eq!(
            b_norm(&[1.0, 1.0], Some(&DenseMatrix::from_diag(&[2.0, 2.0]))).unwrap(),
            2.0,
            epsilon = 1e-15
        );
        assert!(b_norm(&[1.0], Some(&DenseMatrix::identity(2))).is_err());
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = m(&[&[4.0, 1.0, -2.0], &[1.0, 3.0, 0.5], &[-2.0, 0.5, 1.0]]);
        let eig = symmetric_eigen(&a).unwrap();
        let back = spectral_matrix(&eig, |l| l);
        assert!(back.max_abs_diff(&a) < 1e-13);
    }
}
