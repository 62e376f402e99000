//! Minimal dense square-matrix arithmetic.
//!
//! Every matrix in this crate is M×M with M equal to the number of
//! populations (two in all closed forms, small on the Monte-Carlo paths), so
//! a compact row-major type with Gauss-Jordan inversion covers all needs
//! without pulling in a linear-algebra dependency.

use serde::{Deserialize, Serialize};

/// Dense square matrix, row-major storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix of the given dimension.
    #[must_use]
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    /// Identity matrix of the given dimension.
    #[must_use]
    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out[(i, i)] = 1.0;
        }
        out
    }

    /// Build from a function of (row, column).
    #[must_use]
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                out[(i, j)] = f(i, j);
            }
        }
        out
    }

    /// Matrix dimension (rows = columns).
    #[must_use]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major slice of all entries.
    #[must_use]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// In-place `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        assert_eq!(self.dim, other.dim, "matrix dimensions must match");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    /// In-place scalar multiplication.
    pub fn scale(&mut self, scale: f64) {
        for a in &mut self.data {
            *a *= scale;
        }
    }

    /// Replace by the symmetric part (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let s = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = s;
                self[(j, i)] = s;
            }
        }
    }

    /// Matrix-vector product.
    #[must_use]
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim, "vector length must match dimension");
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Matrix-matrix product.
    #[must_use]
    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim, "matrix dimensions must match");
        Matrix::from_fn(self.dim, |i, j| {
            (0..self.dim).map(|k| self[(i, k)] * other[(k, j)]).sum()
        })
    }

    /// Quadratic form vᵀ A v.
    #[must_use]
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.dim, "vector length must match dimension");
        let mut total = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                total += v[i] * self[(i, j)] * v[j];
            }
        }
        total
    }

    /// Largest absolute entry.
    #[must_use]
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Induced 1-norm (maximum absolute column sum).
    #[must_use]
    pub fn one_norm(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    }

    /// True when |A − Aᵀ| ≤ tol entrywise.
    #[must_use]
    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    ///
    /// Returns `None` when a pivot vanishes (to working precision) — the
    /// caller decides which typed error that means.
    #[must_use]
    pub fn inverse(&self) -> Option<Matrix> {
        let n = self.dim;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            // Partial pivot: largest magnitude in this column at/below row.
            let pivot_row = (col..n)
                .max_by(|&r, &s| {
                    a[(r, col)]
                        .abs()
                        .partial_cmp(&a[(s, col)].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            let pivot = a[(pivot_row, col)];
            if !pivot.is_finite() || pivot.abs() < f64::MIN_POSITIVE * 16.0 {
                return None;
            }
            if pivot_row != col {
                a.swap_rows(pivot_row, col);
                inv.swap_rows(pivot_row, col);
            }
            let inv_pivot = 1.0 / pivot;
            for j in 0..n {
                a[(col, j)] *= inv_pivot;
                inv[(col, j)] *= inv_pivot;
            }
            for row in 0..n {
                if row == col {
                    continue;
                }
                let factor = a[(row, col)];
                if factor == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[(row, j)] -= factor * a[(col, j)];
                    inv[(row, j)] -= factor * inv[(col, j)];
                }
            }
        }
        Some(inv)
    }

    /// Solve A x = b through the inverse (fine at these dimensions).
    #[must_use]
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        Some(self.inverse()?.mul_vec(b))
    }

    /// 1-norm condition estimate ‖A‖₁·‖A⁻¹‖₁; `None` when singular.
    #[must_use]
    pub fn condition_one_norm(&self) -> Option<f64> {
        Some(self.one_norm() * self.inverse()?.one_norm())
    }

    fn swap_rows(&mut self, r: usize, s: usize) {
        if r == s {
            return;
        }
        for j in 0..self.dim {
            self.data.swap(r * self.dim + j, s * self.dim + j);
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// ∞-norm of a vector (largest absolute entry).
#[must_use]
pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}
