//! Dense square matrices over `f64`, sized for truncated number bases.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Row-major square matrix. Element `(m, n)` is row `m`, column `n`; for
/// detector matrices the column indexes the input number and the row the
/// output number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] = value;
    }

    #[inline]
    pub fn add_to(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.dim + col] += value;
    }

    pub fn column_sum(&self, col: usize) -> f64 {
        (0..self.dim).map(|r| self.get(r, col)).sum()
    }

    /// Largest deviation of any column sum from unity.
    pub fn max_column_defect(&self) -> f64 {
        (0..self.dim)
            .map(|c| (self.column_sum(c) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_column_stochastic(&self, tol: f64) -> bool {
        self.max_column_defect() <= tol && self.data.iter().all(|&v| v >= -tol)
    }

    pub fn matmul(&self, rhs: &SquareMatrix) -> Result<SquareMatrix, MatrixError> {
        if self.dim != rhs.dim {
            return Err(MatrixError::DimensionMismatch(self.dim, rhs.dim));
        }
        let n = self.dim;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, MatrixError> {
        if v.len() != self.dim {
            return Err(MatrixError::DimensionMismatch(self.dim, v.len()));
        }
        let n = self.dim;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.data[i * n + j] * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rows as owned vectors, convenient for serialization and bindings.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.get(r, c)).collect())
            .collect()
    }
}
