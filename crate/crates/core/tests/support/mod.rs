#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ntk_core::gram::GramMatrix;
use ntk_core::kernel::{gram_matrix, KernelConfig};
use ntk_core::rng::{stream_rng, Rng};
use ntk_core::svm::ClassWeights;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_vector(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit_vector(rng: &mut Rng, d: usize) -> Vec<f64> {
    let v = gaussian_vector(rng, d);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Monte Carlo estimates of `2 E[relu(u) relu(v)]` and `2 E[1(u>0) 1(v>0)]`
/// for unit-variance Gaussians with correlation `lambda`, each with its
/// standard error.
pub fn relu_expectations(lambda: f64, samples: usize, seed: u64) -> ((f64, f64), (f64, f64)) {
    let mut rng = stream_rng(seed, 0);
    let s = (1.0 - lambda * lambda).max(0.0).sqrt();
    let (mut m1, mut q1, mut m0, mut q0) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let u: f64 = StandardNormal.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        let v = lambda * u + s * z;
        let a = 2.0 * u.max(0.0) * v.max(0.0);
        let b = if u > 0.0 && v > 0.0 { 2.0 } else { 0.0 };
        m1 += a;
        q1 += a * a;
        m0 += b;
        q0 += b * b;
    }
    let n = samples as f64;
    let stats = |m: f64, q: f64| {
        let mean = m / n;
        let var = (q / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    };
    (stats(m1, q1), stats(m0, q0))
}

pub struct SvmProblem {
    pub gram: GramMatrix,
    pub labels: Vec<f64>,
    pub cost: f64,
    pub weights: ClassWeights,
}

/// A small SVM problem on an NTK Gram of random points, with both classes
/// present.
pub fn random_svm_problem(seed: u64) -> SvmProblem {
    let mut rng = stream_rng(seed, 1);
    let n = rng.random_range(2..=8);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vector(&mut rng, 3)).collect();
    let depth = rng.random_range(1..=3);
    let gram = gram_matrix(&xs, None, &KernelConfig::ntk(depth, 0)).unwrap();
    let mut labels: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    labels[0] = 1.0;
    labels[1] = -1.0;
    let cost = [0.1, 1.0, 10.0][rng.random_range(0..3)];
    let weights = ClassWeights::new([1.0, 2.0][rng.random_range(0..2)], 1.0);
    SvmProblem { gram, labels, cost, weights }
}

/// Exact maximum of the SVM dual by enumerating every assignment of each
/// coefficient to its lower bound, upper bound, or the free set, and
/// solving the stationarity system on the free set. Only for tiny `n`.
pub fn brute_force_dual(p: &SvmProblem) -> f64 {
    let n = p.labels.len();
    let y = &p.labels;
    let upper: Vec<f64> = y.iter().map(|&l| p.cost * p.weights.for_label(l)).collect();
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * p.gram.get(i, j));
    let objective = |a: &[f64]| {
        let v = DVector::from_column_slice(a);
        a.iter().sum::<f64>() - 0.5 * (v.transpose() * &q * &v)[(0, 0)]
    };
    let mut best = f64::NEG_INFINITY;
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = (0..n).map(|i| if state[i] == 1 { upper[i] } else { 0.0 }).collect();
        let feasible = if free.is_empty() {
            alpha.iter().zip(y).map(|(a, l)| a * l).sum::<f64>().abs() < 1e-9
        } else {
            // [Q_FF y_F; y_Fᵀ 0] [α_F; b] = [1 − Q_FB α_B; −y_Bᵀ α_B]
            let m = free.len();
            let mut a = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    a[(r, c)] = q[(i, j)];
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                rhs[r] = 1.0 - (0..n).filter(|j| state[*j] == 1).map(|j| q[(i, j)] * alpha[j]).sum::<f64>();
            }
            rhs[m] = -(0..n).filter(|j| state[*j] == 1).map(|j| y[j] * alpha[j]).sum::<f64>();
            match a.clone().lu().solve(&rhs) {
                Some(sol) if (&a * &sol - &rhs).amax() < 1e-9 => {
                    for (r, &i) in free.iter().enumerate() {
                        alpha[i] = sol[r];
                    }
                    free.iter().all(|&i| alpha[i] >= -1e-12 && alpha[i] <= upper[i] + 1e-12)
                }
                _ => false,
            }
        };
        if feasible {
            let clipped: Vec<f64> = alpha.iter().zip(&upper).map(|(a, u)| a.clamp(0.0, *u)).collect();
            best = best.max(objective(&clipped));
        }
        let mut k = 0;
        while k < n && state[k] == 2 {
            state[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
        state[k] += 1;
    }
    best
}
