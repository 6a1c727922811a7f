//! Thin QR factorization of a sliding column window.
//!
//! [`QrFactor`] keeps `F = Q R` for a short list of columns, with `Q` stored
//! column by column (`n_rows × n_cols`, orthonormal) and `R` upper triangular.
//! New columns are appended at the right with reorthogonalized classical
//! Gram-Schmidt; the oldest column is removed with a sweep of Givens
//! rotations that restores the triangular shape of `R`. Neither operation
//! refactors from scratch.

use thiserror::Error;

/// Relative threshold below which a diagonal entry of `R` counts as zero.
pub const RANK_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QrError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("factor already holds the maximum of {max} columns")]
    Full { max: usize },
    #[error("factor holds no columns")]
    Empty,
    #[error("column {column} is numerically dependent on the others")]
    RankDeficient { column: usize },
}

/// QR factors of an `n_rows × n_cols` column set, `n_cols <= max_cols`.
#[derive(Debug, Clone)]
pub struct QrFactor {
    n_rows: usize,
    max_cols: usize,
    // q[j] is the j-th orthonormal column.
    q: Vec<Vec<f64>>,
    // r[j] holds rows 0..=j of the j-th column of R.
    r: Vec<Vec<f64>>,
}

impl QrFactor {
    pub fn new(n_rows: usize, max_cols: usize) -> Self {
        Self {
            n_rows,
            max_cols,
            q: Vec::with_capacity(max_cols),
            r: Vec::with_capacity(max_cols),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.q.len()
    }

    pub fn max_cols(&self) -> usize {
        self.max_cols
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// The `j`-th orthonormal column of `Q`.
    pub fn q_col(&self, j: usize) -> &[f64] {
        &self.q[j]
    }

    /// Entry `R[i][j]` (zero below the diagonal).
    pub fn r_entry(&self, i: usize, j: usize) -> f64 {
        if i <= j {
            self.r[j][i]
        } else {
            0.0
        }
    }

    pub fn clear(&mut self) {
        self.q.clear();
        self.r.clear();
    }

    /// Appends `column` as the new last column.
    ///
    /// A column whose component orthogonal to the current span is below
    /// [`RANK_TOL`] times its norm is rejected with
    /// [`QrError::RankDeficient`] and the factor is left untouched.
    pub fn append(&mut self, column: &[f64]) -> Result<(), QrError> {
        self.check_len(column.len())?;
        if self.n_cols() >= self.max_cols {
            return Err(QrError::Full { max: self.max_cols });
        }
        let col_norm = norm2(column);
        let mut v = column.to_vec();
        let mut h = vec![0.0; self.n_cols() + 1];
        // Two passes of classical Gram-Schmidt keep Q orthonormal to
        // working precision.
        for _ in 0..2 {
            let proj = self.qt_mul(&v);
            for (j, &c) in proj.iter().enumerate() {
                h[j] += c;
                axpy(-c, &self.q[j], &mut v);
            }
        }
        let rnn = norm2(&v);
        if col_norm == 0.0 || !(rnn > RANK_TOL * col_norm) {
            return Err(QrError::RankDeficient {
                column: self.n_cols(),
            });
        }
        v.iter_mut().for_each(|x| *x /= rnn);
        let last = h.len() - 1;
        h[last] = rnn;
        self.q.push(v);
        self.r.push(h);
        Ok(())
    }

    /// Removes the oldest (first) column.
    pub fn pop_front(&mut self) -> Result<(), QrError> {
        if self.is_empty() {
            return Err(QrError::Empty);
        }
        self.r.remove(0);
        // Column j of the shifted R now has one entry below the diagonal
        // (row j + 1); rotate rows (j, j + 1) to annihilate it.
        let m = self.r.len();
        for j in 0..m {
            let a = self.r[j][j];
            let b = self.r[j][j + 1];
            let rho = a.hypot(b);
            let (c, s) = if rho == 0.0 {
                (1.0, 0.0)
            } else {
                (a / rho, b / rho)
            };
            self.r[j][j] = rho;
            self.r[j].truncate(j + 1);
            for col in self.r.iter_mut().skip(j + 1) {
                let (x, y) = (col[j], col[j + 1]);
                col[j] = c * x + s * y;
                col[j + 1] = -s * x + c * y;
            }
            let (left, right) = self.q.split_at_mut(j + 1);
            let (qa, qb) = (&mut left[j], &mut right[0]);
            for (x, y) in qa.iter_mut().zip(qb.iter_mut()) {
                let (u, w) = (*x, *y);
                *x = c * u + s * w;
                *y = -s * u + c * w;
            }
        }
        self.q.pop();
        Ok(())
    }

    /// `Qᵀ v`.
    pub fn qt_mul(&self, v: &[f64]) -> Vec<f64> {
        self.q.iter().map(|qj| dot(qj, v)).collect()
    }

    /// `Q c`.
    pub fn q_mul(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for (qj, &c) in self.q.iter().zip(coeffs) {
            axpy(c, qj, &mut out);
        }
        out
    }

    /// `R g`.
    pub fn r_mul(&self, g: &[f64]) -> Vec<f64> {
        let m = self.n_cols();
        let mut out = vec![0.0; m];
        for (j, col) in self.r.iter().enumerate() {
            for (i, &rij) in col.iter().enumerate() {
                out[i] += rij * g[j];
            }
        }
        out
    }

    /// Solves `R g = y` by back substitution.
    pub fn r_solve(&self, y: &[f64]) -> Result<Vec<f64>, QrError> {
        let m = self.n_cols();
        if m == 0 {
            return Err(QrError::Empty);
        }
        self.check_diagonal()?;
        let mut g = y.to_vec();
        for j in (0..m).rev() {
            g[j] /= self.r[j][j];
            let gj = g[j];
            for i in 0..j {
                g[i] -= self.r[j][i] * gj;
            }
        }
        Ok(g)
    }

    /// Least-squares weights `γ = argmin ‖rhs − F γ‖₂`.
    pub fn solve_lsq(&self, rhs: &[f64]) -> Result<Vec<f64>, QrError> {
        self.check_len(rhs.len())?;
        if self.is_empty() {
            return Err(QrError::Empty);
        }
        self.r_solve(&self.qt_mul(rhs))
    }

    /// Dense reconstruction of the represented columns, `Q R`.
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        self.r.iter().map(|col| self.q_mul(col)).collect()
    }

    fn check_len(&self, len: usize) -> Result<(), QrError> {
        if len != self.n_rows {
            return Err(QrError::DimensionMismatch {
                expected: self.n_rows,
                got: len,
            });
        }
        Ok(())
    }

    fn check_diagonal(&self) -> Result<(), QrError> {
        let scale = (0..self.n_cols())
            .map(|j| self.r[j][j].abs())
            .fold(0.0, f64::max);
        for j in 0..self.n_cols() {
            if !(self.r[j][j].abs() > RANK_TOL * scale) {
                return Err(QrError::RankDeficient { column: j });
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
