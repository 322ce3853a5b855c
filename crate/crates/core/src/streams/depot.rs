//! Named test matrices.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{DenseMatrix, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepotMatrix {
    /// `L·U` with unit-diagonal integer triangular factors, strict entries in `[−5, 5]`.
    Golub,
    /// Symmetric tridiagonal, off-diagonals 1, diagonal `|i − (n+1)/2|`.
    Wilkinson,
    /// Random orthogonal upper-Hessenberg matrix `G₁G₂⋯G_{n−1}` of Givens rotations.
    Rohess,
    /// I.i.d. Uniform(0,1) entries.
    RandUniform,
}

impl DepotMatrix {
    pub const ALL: [DepotMatrix; 4] = [
        DepotMatrix::Golub,
        DepotMatrix::Wilkinson,
        DepotMatrix::Rohess,
        DepotMatrix::RandUniform,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DepotMatrix::Golub => "golub",
            DepotMatrix::Wilkinson => "wilkinson",
            DepotMatrix::Rohess => "rohess",
            DepotMatrix::RandUniform => "rand_uniform",
        }
    }
}

impl fmt::Display for DepotMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DepotMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "golub" => Ok(DepotMatrix::Golub),
            "wilkinson" => Ok(DepotMatrix::Wilkinson),
            "rohess" => Ok(DepotMatrix::Rohess),
            "rand_uniform" | "rand" | "uniform" => Ok(DepotMatrix::RandUniform),
            _ => Err(Error::Unknown {
                kind: "matrix generator",
                name: s.to_string(),
            }),
        }
    }
}

pub fn depot_matrix(kind: DepotMatrix, n: usize, rng: &mut SimRng) -> Result<DenseMatrix> {
    if n < 2 {
        return Err(invalid("n", format!("test matrices need n >= 2, got {n}")));
    }
    Ok(match kind {
        DepotMatrix::Wilkinson => {
            let mid = (n as f64 + 1.0) / 2.0;
            DenseMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    ((i + 1) as f64 - mid).abs()
                } else if i.abs_diff(j) == 1 {
                    1.0
                } else {
                    0.0
                }
            })
        }
        DepotMatrix::Rohess => {
            let mut q = DenseMatrix::identity(n);
            for i in 0..n - 1 {
                let theta = 2.0 * PI * rng.random::<f64>();
                let (s, c) = theta.sin_cos();
                for r in 0..n {
                    let (a, b) = (q.get(r, i), q.get(r, i + 1));
                    q.set(r, i, c * a - s * b);
                    q.set(r, i + 1, s * a + c * b);
                }
            }
            q
        }
        DepotMatrix::Golub => {
            let mut l = DenseMatrix::identity(n);
            let mut u = DenseMatrix::identity(n);
            for i in 0..n {
                for j in 0..i {
                    l.set(i, j, rng.random_range(-5..=5) as f64);
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    u.set(i, j, rng.random_range(-5..=5) as f64);
                }
            }
            l.matmul(&u)?
        }
        DepotMatrix::RandUniform => DenseMatrix::from_fn(n, n, |_, _| rng.random::<f64>()),
    })
}
