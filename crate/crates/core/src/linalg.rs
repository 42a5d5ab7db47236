//! Small dense factorizations used by the precoders and the cone solver.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest accepted condition-number estimate for Gram inversions.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

pub type CMatrix = DMatrix<Complex64>;

/// Diagonally pivoted Cholesky factorization `Pᵀ A P = L Lᴴ` of a Hermitian
/// positive-definite matrix.
///
/// Pivoting makes the factorization rank revealing: the ratio of the first
/// to the last pivot is a lower estimate of the 2-norm condition number.
#[derive(Debug, Clone)]
pub struct HermitianFactor {
    perm: Vec<usize>,
    lower: CMatrix,
    condition: f64,
}

impl HermitianFactor {
    pub fn new(a: &CMatrix, max_condition: f64) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "factor_hermitian needs a square matrix");
        let mut work = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut lower = CMatrix::zeros(n, n);
        let mut first_pivot = 0.0;
        let mut condition = 1.0;
        for j in 0..n {
            let mut p = j;
            for i in j + 1..n {
                if work[(i, i)].re > work[(p, p)].re {
                    p = i;
                }
            }
            if p != j {
                work.swap_rows(j, p);
                work.swap_columns(j, p);
                lower.swap_rows(j, p);
                perm.swap(j, p);
            }
            let d = work[(j, j)].re;
            if j == 0 {
                first_pivot = d;
            }
            if !(d > 0.0) {
                return Err(Error::RankDeficient { condition: f64::INFINITY });
            }
            condition = first_pivot / d;
            if condition > max_condition {
                return Err(Error::RankDeficient { condition });
            }
            let root = d.sqrt();
            lower[(j, j)] = Complex64::new(root, 0.0);
            for i in j + 1..n {
                lower[(i, j)] = work[(i, j)] / root;
            }
            for k in j + 1..n {
                let lkj = lower[(k, j)].conj();
                for i in k..n {
                    let v = lower[(i, j)] * lkj;
                    work[(i, k)] -= v;
                    if i != k {
                        work[(k, i)] = work[(i, k)].conj();
                    }
                }
            }
        }
        Ok(Self { perm, lower, condition })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Pivot-ratio condition estimate.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// Solves `A X = B` in place.
    pub fn solve_in_place(&self, b: &mut CMatrix) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for col in 0..b.ncols() {
            for j in 0..n {
                y[j] = b[(self.perm[j], col)];
            }
            // L y' = y
            for i in 0..n {
                let mut s = y[i];
                for k in 0..i {
                    s -= self.lower[(i, k)] * y[k];
                }
                y[i] = s / self.lower[(i, i)].re;
            }
            // Lᴴ z = y'
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in i + 1..n {
                    s -= self.lower[(k, i)].conj() * y[k];
                }
                y[i] = s / self.lower[(i, i)].re;
            }
            for j in 0..n {
                b[(self.perm[j], col)] = y[j];
            }
        }
    }

    pub fn inverse(&self) -> CMatrix {
        let mut id = CMatrix::identity(self.dim(), self.dim());
        self.solve_in_place(&mut id);
        id
    }
}

/// In-place Cholesky of a real symmetric positive-definite matrix stored
/// row-major (lower triangle used). Returns `false` if a pivot is not
/// positive.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let row_j = &mut a[j * n..j * n + n];
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let root = d.sqrt();
        row_j[j] = root;
        for i in j + 1..n {
            let (top, bottom) = a.split_at_mut(i * n);
            let row_j = &top[j * n..j * n + j];
            let row_i = &mut bottom[..n];
            row_i[j] = (row_i[j] - dot(&row_i[..j], row_j)) / root;
        }
    }
    true
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for r in 0..4 {
            acc[r] += a[4 * c + r] * b[4 * c + r];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s = dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = (b[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}
