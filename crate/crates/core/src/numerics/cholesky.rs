use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const SYMMETRY_TOL: f64 = 1e-10;
const PIVOT_FLOOR: f64 = 1e-12;

/// Lower-triangular factor of a symmetric positive-definite matrix,
/// `A = L L^T`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CholeskyFactor {
    l: Matrix,
}

/// Factor a symmetric positive-definite matrix. Pivots at or below 1e-12 are
/// treated as failures; no jitter is added.
pub fn cholesky(a: &Matrix) -> Result<CholeskyFactor> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: a.cols(),
        });
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric);
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut s = a.get(j, j);
        for k in 0..j {
            let v = l.get(j, k);
            s -= v * v;
        }
        if s <= PIVOT_FLOOR {
            return Err(Error::NotPositiveDefinite { index: j, pivot: s });
        }
        let d = s.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut v = a.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / d);
        }
    }
    Ok(CholeskyFactor { l })
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    /// `log det A = 2 sum_k ln L_kk`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|k| self.l.get(k, k).ln()).sum::<f64>() * 2.0
    }

    /// Solve `L z = b` (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l.get(i, k) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        z
    }

    /// Solve `L^T x = b` (back substitution).
    pub fn solve_lower_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_lower_transpose(&self.solve_lower(b))
    }

    /// `A^{-1}` assembled column by column from basis solves.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            e[j] = 0.0;
            for i in 0..n {
                inv.set(i, j, col[i]);
            }
        }
        inv
    }

    /// `tr(A^{-1}) = sum_k ||L^{-1} e_k||^2`.
    pub fn trace_inverse(&self) -> f64 {
        let n = self.dim();
        let mut t = 0.0;
        let mut e = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            let z = self.solve_lower(&e);
            e[k] = 0.0;
            t += z.iter().map(|v| v * v).sum::<f64>();
        }
        t
    }
}

pub fn log_det(a: &Matrix) -> Result<f64> {
    Ok(cholesky(a)?.log_det())
}

pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: b.len(),
        });
    }
    Ok(cholesky(a)?.solve(b))
}
