//! Soft-margin C-SVM on a precomputed kernel, solved with SMO.
//!
//! The dual is solved in its minimization form
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ αᵢ ≤ C·w(yᵢ),   Q_ij = yᵢ y_j K_ij
//! ```
//!
//! picking at each step the maximally KKT-violating pair. Class weights
//! scale the box of each class separately.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{degenerate_err, input_err, Result};
use crate::gram::GramMatrix;
use crate::par;

pub const DEFAULT_TOL: f64 = 1e-3;
pub const MAX_PAIR_UPDATES: usize = 10_000_000;

const TAU: f64 = 1e-12;

/// Per-class multipliers on the cost `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

impl ClassWeights {
    pub const BALANCED: ClassWeights = ClassWeights { positive: 1.0, negative: 1.0 };

    pub fn new(positive: f64, negative: f64) -> Self {
        Self { positive, negative }
    }

    pub fn for_label(&self, y: f64) -> f64 {
        if y > 0.0 {
            self.positive
        } else {
            self.negative
        }
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self::BALANCED
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvmModel {
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    /// Training labels, each `+1.0` or `-1.0`.
    pub labels: Vec<f64>,
    pub cost: f64,
    pub weights: ClassWeights,
    pub converged: bool,
    pub iterations: usize,
}

impl SvmModel {
    pub fn upper_bound(&self, i: usize) -> f64 {
        self.cost * self.weights.for_label(self.labels[i])
    }

    /// `½ Σα − ½ αᵀQα` in maximization form: `Σα − ½ ΣΣ αᵢαⱼyᵢyⱼKᵢⱼ`.
    pub fn dual_objective(&self, gram: &GramMatrix) -> f64 {
        dual_objective(gram, &self.labels, &self.dual_coefficients)
    }

    /// Largest violation of the KKT conditions at the stored bias: for
    /// `αᵢ = 0` need `yᵢf(xᵢ) ≥ 1`, for `αᵢ = U` need `yᵢf(xᵢ) ≤ 1`, and
    /// free coefficients need equality.
    pub fn kkt_residual(&self, gram: &GramMatrix) -> f64 {
        let f = self.decision_on_training(gram);
        let mut worst: f64 = 0.0;
        for (i, fi) in f.iter().enumerate() {
            let margin = self.labels[i] * fi;
            let a = self.dual_coefficients[i];
            let u = self.upper_bound(i);
            let r = if a <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if a >= u {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(r);
        }
        worst
    }

    /// Largest violation of `0 ≤ αᵢ ≤ U_i` and `Σ αᵢyᵢ = 0`.
    pub fn feasibility_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &a) in self.dual_coefficients.iter().enumerate() {
            worst = worst.max(-a).max(a - self.upper_bound(i));
        }
        let eq: f64 = self.dual_coefficients.iter().zip(&self.labels).map(|(a, y)| a * y).sum();
        worst.max(eq.abs())
    }

    fn decision_on_training(&self, gram: &GramMatrix) -> Vec<f64> {
        let n = self.labels.len();
        (0..n)
            .map(|j| {
                (0..n).map(|i| self.dual_coefficients[i] * self.labels[i] * gram.get(i, j)).sum::<f64>() + self.bias
            })
            .collect()
    }
}

pub fn dual_objective(gram: &GramMatrix, labels: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * labels[i] * labels[j] * gram.get(i, j);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Fits a binary C-SVM. Labels must be `±1`.
///
/// Hitting the iteration cap is not an error: the model comes back with
/// `converged = false`.
pub fn svm_fit(gram: &GramMatrix, labels: &[f64], cost: f64, weights: ClassWeights, tol: f64) -> Result<SvmModel> {
    svm_fit_capped(gram, labels, cost, weights, tol, MAX_PAIR_UPDATES)
}

pub fn svm_fit_capped(
    gram: &GramMatrix,
    labels: &[f64],
    cost: f64,
    weights: ClassWeights,
    tol: f64,
    max_updates: usize,
) -> Result<SvmModel> {
    let n = labels.len();
    if !gram.is_square() || gram.rows() != n {
        return Err(input_err!("gram is {}x{} but there are {n} labels", gram.rows(), gram.cols()));
    }
    if gram.max_asymmetry() > 1e-9 * (1.0 + gram.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
        return Err(input_err!("svm_fit needs a symmetric gram"));
    }
    if !(cost > 0.0 && cost.is_finite()) {
        return Err(input_err!("cost must be positive, got {cost}"));
    }
    if !(weights.positive > 0.0 && weights.negative > 0.0) {
        return Err(input_err!("class weights must be positive"));
    }
    if !(tol > 0.0) {
        return Err(input_err!("tolerance must be positive"));
    }
    if let Some(i) = labels.iter().position(|y| *y != 1.0 && *y != -1.0) {
        return Err(input_err!("label {i} is {}, expected +1 or -1", labels[i]));
    }
    if labels.iter().all(|y| *y == labels[0]) {
        return Err(degenerate_err!("all {n} labels are {}; need both classes", labels[0]));
    }

    let y = labels;
    let upper: Vec<f64> = y.iter().map(|&yi| cost * weights.for_label(yi)).collect();
    let mut alpha = vec![0.0; n];
    // gradient of the minimization objective: G = Qα − e
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * gram.get(i, j);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_updates {
        let Some((i, j, gap)) = select_pair(&alpha, &grad, y, &upper) else {
            converged = true;
            break;
        };
        if gap < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (gram.get(i, i) + gram.get(j, j) - 2.0 * gram.get(i, j)).max(TAU);
        // step along the feasible direction keeping yᵀα fixed
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > upper[i] - upper[j] {
                if alpha[i] > upper[i] {
                    alpha[i] = upper[i];
                    alpha[j] = upper[i] - diff;
                }
            } else if alpha[j] > upper[j] {
                alpha[j] = upper[j];
                alpha[i] = upper[j] + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > upper[i] {
                if alpha[i] > upper[i] {
                    alpha[i] = upper[i];
                    alpha[j] = sum - upper[i];
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > upper[j] {
                if alpha[j] > upper[j] {
                    alpha[j] = upper[j];
                    alpha[i] = sum - upper[j];
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    let bias = compute_bias(&alpha, &grad, y, &upper);
    Ok(SvmModel { dual_coefficients: alpha, bias, labels: y.to_vec(), cost, weights, converged, iterations })
}

fn in_up(a: f64, y: f64, u: f64) -> bool {
    (y > 0.0 && a < u) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, u: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < u)
}

/// Maximal violating pair `(i, j, m − M)` with `i ∈ I_up` maximizing
/// `−yG` and `j ∈ I_low` minimizing it.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> Option<(usize, usize, f64)> {
    let mut best_up: Option<(usize, f64)> = None;
    let mut best_low: Option<(usize, f64)> = None;
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], y[t], upper[t]) && best_up.is_none_or(|(_, b)| v > b) {
            best_up = Some((t, v));
        }
        if in_low(alpha[t], y[t], upper[t]) && best_low.is_none_or(|(_, b)| v < b) {
            best_low = Some((t, v));
        }
    }
    let ((i, m), (j, big_m)) = (best_up?, best_low?);
    Some((i, j, m - big_m))
}

/// Average of `yᵢ − Σⱼ αⱼyⱼKᵢⱼ` over free coefficients; when every support
/// vector sits at a bound the average runs over all support vectors and is
/// then clamped into the interval allowed by the KKT conditions.
fn compute_bias(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> f64 {
    // yᵢ − Σⱼ αⱼyⱼKᵢⱼ = −yᵢGᵢ
    let value = |t: usize| -y[t] * grad[t];
    let free: Vec<usize> = (0..alpha.len()).filter(|&t| alpha[t] > 0.0 && alpha[t] < upper[t]).collect();
    if !free.is_empty() {
        return free.iter().map(|&t| value(t)).sum::<f64>() / free.len() as f64;
    }
    let mut lower = f64::NEG_INFINITY;
    let mut upper_b = f64::INFINITY;
    let (mut sum, mut count) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let v = value(t);
        let at_upper = alpha[t] >= upper[t];
        if alpha[t] > 0.0 {
            sum += v;
            count += 1;
        }
        // αᵢ = 0 needs yᵢf ≥ 1; αᵢ = U needs yᵢf ≤ 1
        match (y[t] > 0.0, at_upper) {
            (true, false) | (false, true) => lower = lower.max(v),
            (false, false) | (true, true) => upper_b = upper_b.min(v),
        }
    }
    let avg = if count > 0 { sum / count as f64 } else { 0.5 * (lower + upper_b) };
    if lower <= upper_b {
        avg.clamp(lower, upper_b)
    } else {
        0.5 * (lower + upper_b)
    }
}

/// Decision values `f(z_j) = Σᵢ αᵢyᵢK(xᵢ, z_j) + b` for a `train x test`
/// cross Gram.
pub fn svm_decision(model: &SvmModel, cross_gram: &GramMatrix) -> Result<Vec<f64>> {
    let n = model.labels.len();
    if cross_gram.rows() != n {
        return Err(input_err!("cross gram has {} rows, model was trained on {n} points", cross_gram.rows()));
    }
    let coef: Vec<f64> = model.dual_coefficients.iter().zip(&model.labels).map(|(a, y)| a * y).collect();
    let mut out = vec![model.bias; cross_gram.cols()];
    for (i, &c) in coef.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (o, k) in out.iter_mut().zip(cross_gram.row(i)) {
            *o += c * k;
        }
    }
    Ok(out)
}

/// `+1` for nonnegative decision values, `-1` otherwise.
pub fn predict_sign(decision: &[f64]) -> Vec<f64> {
    decision.iter().map(|&f| if f >= 0.0 { 1.0 } else { -1.0 }).collect()
}

/// One binary model per class seen in training, in ascending class order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OneVsRest {
    pub classes: Vec<usize>,
    pub models: Vec<SvmModel>,
}

impl OneVsRest {
    pub fn decision(&self, cross_gram: &GramMatrix) -> Result<Vec<Vec<f64>>> {
        self.models.iter().map(|m| svm_decision(m, cross_gram)).collect()
    }

    /// Argmax over per-class decision values; ties go to the lowest class.
    pub fn predict(&self, cross_gram: &GramMatrix) -> Result<Vec<usize>> {
        let scores = self.decision(cross_gram)?;
        Ok((0..cross_gram.cols())
            .map(|j| {
                let mut best = 0;
                for k in 1..scores.len() {
                    if scores[k][j] > scores[best][j] {
                        best = k;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

/// One-vs-rest multiclass wrapper. Classes are the distinct values present
/// in `class_labels`; with exactly two classes the second model is still
/// fitted so that argmax prediction is uniform.
pub fn one_vs_rest_fit(
    gram: &GramMatrix,
    class_labels: &[usize],
    cost: f64,
    weights: ClassWeights,
    tol: f64,
) -> Result<OneVsRest> {
    if class_labels.len() != gram.rows() {
        return Err(input_err!("{} labels for a gram with {} rows", class_labels.len(), gram.rows()));
    }
    let mut classes: Vec<usize> = class_labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if let Some(&max) = classes.last() {
        for c in 0..max {
            if classes.binary_search(&c).is_err() {
                log::warn!("class {c} has no training members; skipping its model");
            }
        }
    }
    if classes.len() < 2 {
        return Err(degenerate_err!("one-vs-rest needs at least two classes, got {}", classes.len()));
    }
    let fits = par::map_slice(&classes, |&c| {
        let y: Vec<f64> = class_labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        svm_fit(gram, &y, cost, weights, tol)
    });
    let mut models = Vec::with_capacity(fits.len());
    let mut errors = String::new();
    for (c, fit) in classes.iter().zip(fits) {
        match fit {
            Ok(m) => models.push(m),
            Err(e) => errors.push_str(&alloc::format!("class {c}: {e}; ")),
        }
    }
    if !errors.is_empty() {
        return Err(degenerate_err!("{errors}"));
    }
    Ok(OneVsRest { classes, models })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gram(n: usize, v: &[f64]) -> GramMatrix {
        GramMatrix::from_vec(n, n, v.to_vec(), true).unwrap()
    }

    #[test]
    fn identity_two_points() {
        let g = gram(2, &[1.0, 0.0, 0.0, 1.0]);
        let m = svm_fit(&g, &[1.0, -1.0], 10.0, ClassWeights::BALANCED, 1e-6).unwrap();
        assert_relative_eq!(m.dual_coefficients[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(m.dual_coefficients[1], 1.0, epsilon = 1e-9);
        assert_relative_eq!(m.bias, 0.0, epsilon = 1e-9);
        assert!(m.converged);
        let f = svm_decision(&m, &g).unwrap();
        assert_relative_eq!(f[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(f[1], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn indistinguishable_points_hit_the_box() {
        let g = gram(2, &[1.0, 1.0, 1.0, 1.0]);
        let m = svm_fit(&g, &[1.0, -1.0], 3.0, ClassWeights::BALANCED, 1e-6).unwrap();
        assert_eq!(m.dual_coefficients, vec![3.0, 3.0]);
        let f = svm_decision(&m, &g).unwrap();
        assert_eq!(f[0], f[1]);
        assert_eq!(f[0], m.bias);
        assert!(m.kkt_residual(&g) <= 1e-9);
    }

    #[test]
    fn zero_cross_gram_gives_bias() {
        let g = gram(2, &[1.0, 0.0, 0.0, 1.0]);
        let m = svm_fit(&g, &[1.0, -1.0], 10.0, ClassWeights::BALANCED, 1e-6).unwrap();
        let f = svm_decision(&m, &GramMatrix::zeros(2, 3)).unwrap();
        assert!(f.iter().all(|v| *v == m.bias));
        assert!(svm_decision(&m, &GramMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn class_weights_scale_boxes() {
        let g = gram(2, &[1.0, 1.0, 1.0, 1.0]);
        let w = ClassWeights::new(2.0, 1.0);
        let m = svm_fit(&g, &[1.0, -1.0], 1.0, w, 1e-6).unwrap();
        assert_eq!(m.upper_bound(0), 2.0);
        assert_eq!(m.upper_bound(1), 1.0);
        assert!(m.feasibility_residual() < 1e-12);
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let g = gram(2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            svm_fit(&g, &[1.0, 1.0], 1.0, ClassWeights::BALANCED, 1e-3),
            Err(crate::Error::Degenerate(_))
        ));
        assert!(svm_fit(&g, &[1.0], 1.0, ClassWeights::BALANCED, 1e-3).is_err());
        assert!(svm_fit(&g, &[1.0, -1.0], 0.0, ClassWeights::BALANCED, 1e-3).is_err());
        assert!(svm_fit(&g, &[1.0, 0.0], 1.0, ClassWeights::BALANCED, 1e-3).is_err());
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let g = gram(3, &[2.0, 0.5, 0.1, 0.5, 2.0, 0.3, 0.1, 0.3, 2.0]);
        let m = svm_fit_capped(&g, &[1.0, -1.0, 1.0], 10.0, ClassWeights::BALANCED, 1e-12, 1).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 1);
    }

    #[test]
    fn one_vs_rest_block_identity() {
        let n = 6;
        let labels = [0, 0, 1, 1, 2, 2];
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    v[i * n + j] = 1.0;
                }
            }
        }
        let g = gram(n, &v);
        let ovr = one_vs_rest_fit(&g, &labels, 10.0, ClassWeights::BALANCED, 1e-6).unwrap();
        assert_eq!(ovr.classes, vec![0, 1, 2]);
        assert_eq!(ovr.predict(&g).unwrap(), labels.to_vec());
    }

    #[test]
    fn one_vs_rest_two_classes_agrees_with_binary() {
        let g = gram(2, &[1.0, 0.0, 0.0, 1.0]);
        let ovr = one_vs_rest_fit(&g, &[0, 1], 10.0, ClassWeights::BALANCED, 1e-6).unwrap();
        let d = ovr.decision(&g).unwrap();
        for (a, b) in d[0].iter().zip(&d[1]) {
            assert_relative_eq!(a - ovr.models[0].bias, -(b - ovr.models[1].bias), epsilon = 1e-9);
        }
        let binary = svm_fit(&g, &[1.0, -1.0], 10.0, ClassWeights::BALANCED, 1e-6).unwrap();
        let signs = predict_sign(&svm_decision(&binary, &g).unwrap());
        let pred = ovr.predict(&g).unwrap();
        for j in 0..2 {
            assert_eq!(pred[j] == 0, signs[j] > 0.0);
        }
    }

    #[test]
    fn one_vs_rest_single_class_is_error() {
        let g = gram(2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(one_vs_rest_fit(&g, &[1, 1], 1.0, ClassWeights::BALANCED, 1e-3).is_err());
    }
}
