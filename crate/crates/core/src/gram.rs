use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input_err, Result};
use crate::par;

/// Dense `rows x cols` kernel matrix stored row-major.
///
/// `symmetric` is set only when both index sets refer to the same inputs;
/// in that case the upper triangle was computed and mirrored, so
/// `get(i, j) == get(j, i)` holds bit for bit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GramMatrix {
    rows: usize,
    cols: usize,
    symmetric: bool,
    values: Vec<f64>,
}

impl GramMatrix {
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>, symmetric: bool) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(input_err!("gram buffer has {} values, expected {rows}x{cols}", values.len()));
        }
        if symmetric && rows != cols {
            return Err(input_err!("symmetric gram must be square, got {rows}x{cols}"));
        }
        Ok(Self { rows, cols, symmetric, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, symmetric: false, values: vec![0.0; rows * cols] }
    }

    /// Builds a cross matrix by evaluating `f(i, j)` on every entry, in parallel.
    pub fn from_fn<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let values = par::map_range(rows * cols, |k| f(k / cols, k % cols));
        Self { rows, cols, symmetric: false, values }
    }

    /// Builds a symmetric matrix from the upper triangle (diagonal included).
    pub fn symmetric_from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let upper = par::map_slice(&pairs, |&(i, j)| f(i, j));
        let mut values = vec![0.0; n * n];
        for (&(i, j), v) in pairs.iter().zip(upper) {
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
        Self { rows: n, cols: n, symmetric: true, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    /// Sub-matrix on the given row and column index sets. The result is
    /// flagged symmetric only when the source is symmetric and both index
    /// sets are identical.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            for &j in cols {
                values.push(self.get(i, j));
            }
        }
        Self { rows: rows.len(), cols: cols.len(), symmetric: self.symmetric && rows == cols, values }
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        Self { rows: self.cols, cols: self.rows, symmetric: self.symmetric, values }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            symmetric: self.symmetric,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.values[i * self.cols + j] = f(i, j, self.get(i, j));
            }
        }
        out
    }

    /// Largest absolute asymmetry `|K_ij - K_ji|`; zero for non-square input
    /// is not meaningful, so callers should check `is_square` first.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows.min(self.cols) {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}
