//! Minimal dense linear algebra: row-major matrices, vector helpers, and a
//! Cholesky-based solver for symmetric positive definite systems.
//!
//! The estimation problems in this crate are low-dimensional (tens of
//! coefficients at most) while the data are large, so all cost lives in the
//! data passes, not in the solves. A small, dependency-free implementation
//! keeps the numeric behaviour fully under our control — in particular the
//! exact symmetry of accumulated Gram/Hessian matrices and the pivot rule
//! used to declare a system singular.

use crate::error::{Error, Result};

/// Relative pivot threshold for the Cholesky factorization: a pivot is
/// declared non-positive when it is at or below `PIVOT_RTOL * max_diag`.
pub const PIVOT_RTOL: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// A `rows x cols` matrix of zeros.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// The `n x n` identity.
    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build a matrix from row vectors. Panics if the rows are ragged or
    /// empty; this is a constructor for statically known shapes.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "from_rows: no rows");
        let cols = rows[0].len();
        assert!(cols > 0, "from_rows: empty rows");
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "from_rows: ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry accessor.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    /// Entry mutator.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    /// Add `v` to entry `(i, j)`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] += v;
    }

    /// Borrow row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert!(i < self.rows);
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Mutably borrow row `i`.
    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        debug_assert!(i < self.rows);
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec: dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Accumulate the upper triangle of the scaled outer product
    /// `w * v vᵀ` into `self`. Only entries with `j >= i` are touched;
    /// call [`Matrix::mirror_upper`] once accumulation is complete to
    /// obtain an exactly symmetric matrix.
    pub fn add_sym_outer(&mut self, v: &[f64], w: f64) {
        assert_eq!(self.rows, self.cols, "add_sym_outer: square matrix required");
        assert_eq!(v.len(), self.rows, "add_sym_outer: dimension mismatch");
        let n = self.rows;
        for i in 0..n {
            let wi = w * v[i];
            let row = &mut self.data[i * n..(i + 1) * n];
            for j in i..n {
                row[j] += wi * v[j];
            }
        }
    }

    /// Copy the upper triangle onto the lower triangle, making the matrix
    /// exactly symmetric by construction.
    pub fn mirror_upper(&mut self) {
        assert_eq!(self.rows, self.cols, "mirror_upper: square matrix required");
        for i in 1..self.rows {
            for j in 0..i {
                let v = self.get(j, i);
                self.set(i, j, v);
            }
        }
    }

    /// Entrywise `self += other`.
    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.rows, other.rows, "add_assign: row mismatch");
        assert_eq!(self.cols, other.cols, "add_assign: column mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    /// Entrywise scaling.
    pub fn scale(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    /// The diagonal as a vector.
    pub fn diag(&self) -> Vec<f64> {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self.get(i, i)).collect()
    }

    /// Cholesky factorization `A = L Lᵀ` of a symmetric positive definite
    /// matrix. Fails with [`Error::SingularMatrix`] when a pivot falls at or
    /// below `PIVOT_RTOL` times the largest diagonal entry of `A`.
    pub fn cholesky(&self) -> Result<CholeskyFactor> {
        assert_eq!(self.rows, self.cols, "cholesky: square matrix required");
        let n = self.rows;
        let max_diag = self
            .diag()
            .into_iter()
            .fold(0.0_f64, |acc, d| acc.max(d));
        let threshold = PIVOT_RTOL * max_diag;

        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            // Diagonal pivot.
            let mut d = self.get(j, j);
            for k in 0..j {
                let ljk = l.get(j, k);
                d -= ljk * ljk;
            }
            if !d.is_finite() || d <= threshold {
                return Err(Error::SingularMatrix { col: j, pivot: d });
            }
            let ljj = d.sqrt();
            l.set(j, j, ljj);
            // Column below the pivot.
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / ljj);
            }
        }
        Ok(CholeskyFactor { l })
    }

    /// Solve `A x = b` for symmetric positive definite `A`.
    pub fn spd_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cholesky()?.solve(b))
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: Matrix,
}

impl CholeskyFactor {
    /// The lower-triangular factor `L`.
    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// Solve `L Lᵀ x = b` by forward then backward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(b.len(), n, "solve: dimension mismatch");
        // Forward: L y = b.
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        // Backward: Lᵀ x = y.
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l.get(k, i) * x[k];
            }
            x[i] = s / self.l.get(i, i);
        }
        x
    }

    /// Apply `Lᵀ` to a vector: `x -> Lᵀ x`. Useful for generating vectors
    /// with a prescribed covariance from i.i.d. standard normals.
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(v.len(), n, "transpose_apply: dimension mismatch");
        (0..n)
            .map(|i| (i..n).map(|k| self.l.get(k, i) * v[k]).sum())
            .collect()
    }

    /// Apply `L` to a vector: `x -> L x`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(v.len(), n, "apply: dimension mismatch");
        (0..n)
            .map(|i| (0..=i).map(|k| self.l.get(i, k) * v[k]).sum())
            .collect()
    }
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a * x` in place.
#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Maximum absolute entry (the max-norm); 0 for an empty slice.
#[inline]
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Elementwise difference `a - b`.
pub fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
