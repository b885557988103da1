//! Exact kernel (ridge) regression on a precomputed Gram.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{input_err, numerical_err, Error, Result};
use crate::gram::GramMatrix;

/// Smallest acceptable `min(diag L)² / max(diag L)²` of the Cholesky factor
/// before a system is treated as singular.
const SINGULAR_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RidgeModel {
    /// `n x k` row-major coefficient matrix.
    pub coefficients: Vec<f64>,
    pub train_count: usize,
    pub outputs: usize,
    pub ridge: f64,
}

impl RidgeModel {
    pub fn coefficient(&self, i: usize, k: usize) -> f64 {
        self.coefficients[i * self.outputs + k]
    }
}

/// Solves `(K + λI) C = Y` for `targets` given as `n` rows of `k` outputs.
pub fn ridge_fit(gram: &GramMatrix, targets: &[Vec<f64>], ridge: f64) -> Result<RidgeModel> {
    let n = gram.rows();
    if !gram.is_square() {
        return Err(input_err!("ridge_fit needs a square gram, got {}x{}", gram.rows(), gram.cols()));
    }
    if targets.len() != n {
        return Err(input_err!("{} target rows for a gram of size {n}", targets.len()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(input_err!("ridge must be nonnegative, got {ridge}"));
    }
    let k = targets.first().map_or(0, Vec::len);
    if k == 0 || targets.iter().any(|t| t.len() != k) {
        return Err(input_err!("targets must be a nonempty rectangular matrix"));
    }

    let mut a = DMatrix::from_row_slice(n, n, gram.values());
    // symmetrize against rounding in externally produced grams
    a = (&a + a.transpose()) * 0.5;
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    let singular =
        || numerical_err!("kernel system is singular at ridge {ridge}; use a positive ridge (e.g. 1e-6 * trace / n)");
    let chol = a.cholesky().ok_or_else(singular)?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..n).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min / max < SINGULAR_RATIO {
        return Err(singular());
    }

    let y = DMatrix::from_fn(n, k, |i, j| targets[i][j]);
    let c = chol.solve(&y);
    let mut coefficients = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            coefficients.push(c[(i, j)]);
        }
    }
    Ok(RidgeModel { coefficients, train_count: n, outputs: k, ridge })
}

/// [`ridge_fit`], retrying once with `λ = 1e-6 · trace(K) / n` when the
/// requested system is singular.
pub fn ridge_fit_with_fallback(gram: &GramMatrix, targets: &[Vec<f64>], ridge: f64) -> Result<RidgeModel> {
    match ridge_fit(gram, targets, ridge) {
        Err(Error::Numerical(msg)) => {
            let n = gram.rows() as f64;
            let fallback = 1e-6 * gram.diagonal().iter().sum::<f64>() / n;
            if !(fallback > ridge) {
                return Err(Error::Numerical(msg));
            }
            log::warn!("{msg}; retrying with ridge {fallback:e}");
            ridge_fit(gram, targets, fallback)
        }
        other => other,
    }
}

/// Predictions `Kᵀ_cross C`, one row of `k` outputs per test point.
pub fn ridge_predict(model: &RidgeModel, cross_gram: &GramMatrix) -> Result<Vec<Vec<f64>>> {
    if cross_gram.rows() != model.train_count {
        return Err(input_err!("cross gram has {} rows, model was fitted on {}", cross_gram.rows(), model.train_count));
    }
    let kc = DMatrix::from_row_slice(cross_gram.rows(), cross_gram.cols(), cross_gram.values());
    let coef = DMatrix::from_row_slice(model.train_count, model.outputs, &model.coefficients);
    let pred = kc.tr_mul(&coef);
    Ok((0..pred.nrows()).map(|i| pred.row(i).iter().copied().collect()).collect())
}

/// Index of the largest entry in each row; ties go to the lowest index.
pub fn argmax_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    rows.iter()
        .map(|r| {
            let mut best = 0;
            for (k, v) in r.iter().enumerate() {
                if *v > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// One-hot rows for labels in `0..classes`.
pub fn one_hot(labels: &[usize], classes: usize) -> Vec<Vec<f64>> {
    labels
        .iter()
        .map(|&l| {
            let mut row = alloc::vec![0.0; classes];
            row[l] = 1.0;
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_system() {
        let g = GramMatrix::from_vec(1, 1, vec![1.0], true).unwrap();
        let m = ridge_fit(&g, &[vec![1.0]], 0.0).unwrap();
        assert_relative_eq!(m.coefficient(0, 0), 1.0, epsilon = 1e-15);
        let cross = GramMatrix::from_vec(1, 1, vec![0.5], false).unwrap();
        assert_relative_eq!(ridge_predict(&m, &cross).unwrap()[0][0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_system_with_one_hot_targets() {
        let mut v = vec![0.0; 9];
        for i in 0..3 {
            v[i * 3 + i] = 2.0;
        }
        let g = GramMatrix::from_vec(3, 3, v, true).unwrap();
        let m = ridge_fit(&g, &one_hot(&[0, 1, 2], 3), 0.0).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert_relative_eq!(m.coefficient(i, k), if i == k { 0.5 } else { 0.0 }, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn zero_cross_gram_predicts_zero() {
        let g = GramMatrix::from_vec(2, 2, vec![2.0, 0.5, 0.5, 1.0], true).unwrap();
        let m = ridge_fit(&g, &[vec![1.0], vec![-1.0]], 0.0).unwrap();
        let p = ridge_predict(&m, &GramMatrix::zeros(2, 4)).unwrap();
        assert!(p.iter().all(|r| r[0] == 0.0));
        assert!(ridge_predict(&m, &GramMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn singular_system_asks_for_ridge_then_falls_back() {
        let g = GramMatrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0], true).unwrap();
        let t = [vec![1.0], vec![0.0]];
        match ridge_fit(&g, &t, 0.0) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("positive ridge")),
            other => panic!("expected singular error, got {other:?}"),
        }
        let m = ridge_fit_with_fallback(&g, &t, 0.0).unwrap();
        assert_relative_eq!(m.ridge, 1e-6, epsilon = 1e-18);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 2.0, 3.0]]), vec![0, 2]);
    }
}
