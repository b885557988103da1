//! Closed-form fully-connected NTK and NNGP kernels for ReLU networks.
//!
//! For an `L`-hidden-layer ReLU network without biases the covariance of
//! layer outputs follows the arc-cosine recursion
//!
//! ```text
//! Σ⁽⁰⁾(x,y) = xᵀy
//! Σ⁽ʰ⁾(x,y) = (c/2) √(Σ⁽ʰ⁻¹⁾(x,x) Σ⁽ʰ⁻¹⁾(y,y)) κ₁(λ)
//! Σ̇⁽ʰ⁾(x,y) = (c/2) κ₀(λ),     λ = Σ⁽ʰ⁻¹⁾(x,y) / √(Σ⁽ʰ⁻¹⁾(x,x) Σ⁽ʰ⁻¹⁾(y,y))
//! ```
//!
//! and the tangent kernel with the bottom `L'` layers frozen is
//! `Θ = Σ_{h=L'+1}^{L+1} Σ⁽ʰ⁻¹⁾ · Π_{h'=h}^{L} Σ̇⁽ʰ'⁾`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{degenerate_err, input_err, Result};
use crate::gram::GramMatrix;

/// Numerical slack allowed on Cauchy–Schwarz before a pair is rejected.
pub const CAUCHY_SCHWARZ_SLACK: f64 = 1e-9;

/// Default ReLU scaling constant; keeps `Σ⁽ʰ⁾(x,x)` constant across layers.
pub const RELU_C_SIGMA: f64 = 2.0;

const COLLINEAR_SNAP: f64 = 8.0 * f64::EPSILON;

/// `2·E[relu(u) relu(v)]` for unit-variance Gaussians with correlation `lambda`.
pub fn kappa1(lambda: f64) -> f64 {
    let l = lambda.clamp(-1.0, 1.0);
    let v = (libm::sqrt(1.0 - l * l) + l * (PI - libm::acos(l))) / PI;
    v.clamp(0.0, 1.0)
}

/// `2·E[1{u>0} 1{v>0}]` for unit-variance Gaussians with correlation `lambda`.
pub fn kappa0(lambda: f64) -> f64 {
    let l = lambda.clamp(-1.0, 1.0);
    ((PI - libm::acos(l)) / PI).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Variant {
    #[default]
    Ntk,
    /// Output covariance at initialization; same as NTK with every hidden
    /// layer frozen.
    Nngp,
}

/// Hyperparameters of the fully-connected kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelConfig {
    /// Number of hidden layers `L`.
    pub depth: usize,
    /// Number of bottom layers held fixed, `L'` in `[0, L]`.
    pub fixed_layers: usize,
    pub variant: Variant,
    pub c_sigma: f64,
}

impl KernelConfig {
    pub fn ntk(depth: usize, fixed_layers: usize) -> Self {
        Self { depth, fixed_layers, variant: Variant::Ntk, c_sigma: RELU_C_SIGMA }
    }

    pub fn nngp(depth: usize) -> Self {
        Self { depth, fixed_layers: depth, variant: Variant::Nngp, c_sigma: RELU_C_SIGMA }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(input_err!("kernel depth must be at least 1"));
        }
        if self.fixed_layers > self.depth {
            return Err(input_err!("fixed_layers {} exceeds depth {}", self.fixed_layers, self.depth));
        }
        if !(self.c_sigma > 0.0 && self.c_sigma.is_finite()) {
            return Err(input_err!("c_sigma must be positive, got {}", self.c_sigma));
        }
        Ok(())
    }

    /// First trained layer index (1-based) minus one: `L'`, or `L` for NNGP.
    pub fn effective_fixed_layers(&self) -> usize {
        match self.variant {
            Variant::Ntk => self.fixed_layers,
            Variant::Nngp => self.depth,
        }
    }

    /// The fifteen `(L, L')` pairs with `L` in 1..=5 and `L'` in 0..L.
    pub fn uci_grid() -> Vec<KernelConfig> {
        (1..=5).flat_map(|l| (0..l).map(move |lp| KernelConfig::ntk(l, lp))).collect()
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self::ntk(1, 0)
    }
}

/// The `Λ⁽ʰ⁾` state of one input pair at a single layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariancePair {
    pub sigma_xx: f64,
    pub sigma_yy: f64,
    pub sigma_xy: f64,
}

impl CovariancePair {
    pub fn new(sigma_xx: f64, sigma_yy: f64, sigma_xy: f64) -> Self {
        Self { sigma_xx, sigma_yy, sigma_xy }
    }

    /// True when `|Σxy| ≤ √(Σxx Σyy)` up to [`CAUCHY_SCHWARZ_SLACK`].
    pub fn is_consistent(&self) -> bool {
        self.sigma_xx >= 0.0
            && self.sigma_yy >= 0.0
            && self.sigma_xy.abs() <= libm::sqrt(self.sigma_xx * self.sigma_yy) + CAUCHY_SCHWARZ_SLACK
    }

    /// Correlation `λ`, clamped to `[-1, 1]`; zero when either variance is zero.
    ///
    /// Values within a few ulps of `±1` are snapped to `±1`: `kappa0` has
    /// unbounded slope there, so rounding noise in `λ` would otherwise show
    /// up at the 1e-8 level for collinear inputs.
    pub fn correlation(&self) -> f64 {
        let norm = libm::sqrt(self.sigma_xx * self.sigma_yy);
        if norm > 0.0 {
            let l = (self.sigma_xy / norm).clamp(-1.0, 1.0);
            if 1.0 - l.abs() <= COLLINEAR_SNAP {
                l.signum()
            } else {
                l
            }
        } else {
            0.0
        }
    }

    /// Pushes the pair through one ReLU layer. Returns the next state and
    /// the derivative covariance `Σ̇` of this layer.
    pub fn relu_step(&self, c_sigma: f64) -> (CovariancePair, f64) {
        let half_c = 0.5 * c_sigma;
        let lambda = self.correlation();
        let norm = libm::sqrt(self.sigma_xx * self.sigma_yy);
        let next = CovariancePair {
            sigma_xx: half_c * self.sigma_xx,
            sigma_yy: half_c * self.sigma_yy,
            sigma_xy: half_c * norm * kappa1(lambda),
        };
        (next, half_c * kappa0(lambda))
    }
}

/// Per-input variances `Σ⁽ʰ⁾(x,x)` for `h = 0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalTrajectory {
    sigma: Vec<f64>,
}

impl DiagonalTrajectory {
    pub fn new(x: &[f64], config: &KernelConfig) -> Self {
        let mut sigma = Vec::with_capacity(config.depth + 1);
        let mut s = dot(x, x);
        sigma.push(s);
        for _ in 0..config.depth {
            s *= 0.5 * config.c_sigma;
            sigma.push(s);
        }
        Self { sigma }
    }

    pub fn at(&self, layer: usize) -> f64 {
        self.sigma[layer]
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Per-layer summands of the full (nothing frozen) tangent kernel:
/// entry `h-1` holds `Σ⁽ʰ⁻¹⁾ · Π_{h'=h}^{L} Σ̇⁽ʰ'⁾` for `h = 1..=L+1`.
pub fn ntk_summands(x: &[f64], y: &[f64], config: &KernelConfig) -> Result<Vec<f64>> {
    check_pair(x, y, config)?;
    let dx = DiagonalTrajectory::new(x, config);
    let dy = DiagonalTrajectory::new(y, config);
    Ok(summands_cached(dot(x, y), &dx, &dy, config))
}

fn summands_cached(xy: f64, dx: &DiagonalTrajectory, dy: &DiagonalTrajectory, config: &KernelConfig) -> Vec<f64> {
    let depth = config.depth;
    let mut sigma = Vec::with_capacity(depth + 1);
    let mut sigma_dot = Vec::with_capacity(depth);
    let mut cross = xy;
    sigma.push(cross);
    for h in 0..depth {
        let state = CovariancePair::new(dx.at(h), dy.at(h), cross);
        let (next, sdot) = state.relu_step(config.c_sigma);
        cross = next.sigma_xy;
        sigma.push(cross);
        sigma_dot.push(sdot);
    }
    // summand for layer h (1-based) is sigma[h-1] times the product of
    // sigma_dot[h-1..depth]; build products from the top down
    let mut out = alloc::vec![0.0; depth + 1];
    let mut prod = 1.0;
    for h in (1..=depth + 1).rev() {
        out[h - 1] = sigma[h - 1] * prod;
        if h >= 2 {
            prod *= sigma_dot[h - 2];
        }
    }
    out
}

fn check_pair(x: &[f64], y: &[f64], config: &KernelConfig) -> Result<()> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(input_err!("dimension mismatch: {} vs {}", x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(input_err!("inputs must have dimension at least 1"));
    }
    Ok(())
}

/// Tangent kernel `Θ(x, y)` restricted to the trained layers; equals the
/// NNGP kernel `Σ⁽ᴸ⁾(x, y)` when all hidden layers are fixed.
pub fn ntk_pair(x: &[f64], y: &[f64], config: &KernelConfig) -> Result<f64> {
    check_pair(x, y, config)?;
    let dx = DiagonalTrajectory::new(x, config);
    let dy = DiagonalTrajectory::new(y, config);
    Ok(ntk_pair_cached(dot(x, y), &dx, &dy, config))
}

/// [`ntk_pair`] with precomputed inner product and per-input trajectories.
pub fn ntk_pair_cached(xy: f64, dx: &DiagonalTrajectory, dy: &DiagonalTrajectory, config: &KernelConfig) -> f64 {
    let fixed = config.effective_fixed_layers();
    summands_cached(xy, dx, dy, config)[fixed..].iter().sum()
}

/// Pairwise kernel between two input lists.
///
/// When `z` is `None` the Gram of `x` with itself is built from the upper
/// triangle and flagged symmetric.
pub fn gram_matrix(x: &[Vec<f64>], z: Option<&[Vec<f64>]>, config: &KernelConfig) -> Result<GramMatrix> {
    config.validate()?;
    if x.is_empty() || z.is_some_and(|z| z.is_empty()) {
        return Err(input_err!("gram_matrix needs nonempty input lists"));
    }
    let dim = x[0].len();
    if dim == 0 {
        return Err(input_err!("inputs must have dimension at least 1"));
    }
    let all = x.iter().chain(z.into_iter().flatten());
    if let Some((i, v)) = all.enumerate().find(|(_, v)| v.len() != dim) {
        return Err(input_err!("input {i} has dimension {}, expected {dim}", v.len()));
    }
    let traj_x: Vec<_> = x.iter().map(|v| DiagonalTrajectory::new(v, config)).collect();
    match z {
        None => Ok(GramMatrix::symmetric_from_fn(x.len(), |i, j| {
            ntk_pair_cached(dot(&x[i], &x[j]), &traj_x[i], &traj_x[j], config)
        })),
        Some(z) => {
            let traj_z: Vec<_> = z.iter().map(|v| DiagonalTrajectory::new(v, config)).collect();
            Ok(GramMatrix::from_fn(x.len(), z.len(), |i, j| {
                ntk_pair_cached(dot(&x[i], &z[j]), &traj_x[i], &traj_z[j], config)
            }))
        }
    }
}

/// Rescales kernels so that every sample has unit length in feature space:
/// `K'(x, z) = K(x, z) / √(K(x,x) K(z,z))`.
pub fn normalize_gram(
    train_gram: &GramMatrix,
    cross_gram: &GramMatrix,
    train_diag: &[f64],
    test_diag: &[f64],
) -> Result<(GramMatrix, GramMatrix)> {
    if train_gram.rows() != train_diag.len() || train_gram.cols() != train_diag.len() {
        return Err(input_err!(
            "train gram {}x{} does not match {} diagonal entries",
            train_gram.rows(),
            train_gram.cols(),
            train_diag.len()
        ));
    }
    if cross_gram.rows() != train_diag.len() || cross_gram.cols() != test_diag.len() {
        return Err(input_err!(
            "cross gram {}x{} does not match diagonals ({}, {})",
            cross_gram.rows(),
            cross_gram.cols(),
            train_diag.len(),
            test_diag.len()
        ));
    }
    check_positive("train", train_diag)?;
    check_positive("test", test_diag)?;
    let train_scale: Vec<f64> = train_diag.iter().map(|d| libm::sqrt(*d)).collect();
    let test_scale: Vec<f64> = test_diag.iter().map(|d| libm::sqrt(*d)).collect();
    let train = train_gram.map(|i, j, v| if i == j { 1.0 } else { v / (train_scale[i] * train_scale[j]) });
    let cross = cross_gram.map(|i, j, v| v / (train_scale[i] * test_scale[j]));
    Ok((train, cross))
}

fn check_positive(which: &str, diag: &[f64]) -> Result<()> {
    match diag.iter().position(|d| !(*d > 0.0)) {
        Some(i) => Err(degenerate_err!("{which} diagonal entry {i} is {} (must be positive)", diag[i])),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use core::f64::consts::FRAC_1_PI;

    #[test]
    fn kappa_endpoints() {
        assert_eq!(kappa1(1.0), 1.0);
        assert_eq!(kappa1(-1.0), 0.0);
        assert_relative_eq!(kappa1(0.0), FRAC_1_PI, epsilon = 1e-15);
        assert_eq!(kappa0(1.0), 1.0);
        assert_eq!(kappa0(-1.0), 0.0);
        assert_relative_eq!(kappa0(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn kappa_clamps_rounding_overshoot() {
        assert_eq!(kappa1(1.0 + 1e-12), 1.0);
        assert_eq!(kappa0(-1.0 - 1e-12), 0.0);
        assert!(kappa1(1.0 + 1e-12).is_finite());
    }

    #[test]
    fn kappas_are_monotone() {
        let mut prev = (kappa0(-1.0), kappa1(-1.0));
        for i in 1..=400 {
            let l = -1.0 + i as f64 / 200.0;
            let cur = (kappa0(l), kappa1(l));
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1, "not monotone at {l}");
            prev = cur;
        }
    }

    #[test]
    fn unit_vector_self_kernel_counts_layers() {
        let x = [0.6, 0.8];
        assert_relative_eq!(ntk_pair(&x, &x, &KernelConfig::ntk(1, 0)).unwrap(), 2.0, epsilon = 1e-14);
        for depth in 1..=6 {
            let v = ntk_pair(&x, &x, &KernelConfig::ntk(depth, 0)).unwrap();
            assert_relative_eq!(v, (depth + 1) as f64, epsilon = 1e-12);
        }
        assert_relative_eq!(ntk_pair(&x, &x, &KernelConfig::ntk(1, 1)).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn orthogonal_pair_depth_one() {
        let v = ntk_pair(&[1.0, 0.0], &[0.0, 1.0], &KernelConfig::ntk(1, 0)).unwrap();
        assert_relative_eq!(v, FRAC_1_PI, epsilon = 1e-15);
    }

    #[test]
    fn zero_input_gives_zero_kernel() {
        let v = ntk_pair(&[0.0, 0.0], &[0.3, -1.0], &KernelConfig::ntk(3, 0)).unwrap();
        assert_eq!(v, 0.0);
        let v = ntk_pair(&[0.0, 0.0], &[0.0, 0.0], &KernelConfig::ntk(3, 1)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn summands_sum_to_full_kernel() {
        let x = [0.3, -0.2, 0.9];
        let y = [0.5, 0.1, 0.4];
        let cfg = KernelConfig::ntk(4, 0);
        let parts = ntk_summands(&x, &y, &cfg).unwrap();
        assert_eq!(parts.len(), 5);
        let total: f64 = parts.iter().sum();
        assert_relative_eq!(total, ntk_pair(&x, &y, &cfg).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ntk_pair(&[1.0], &[1.0, 2.0], &KernelConfig::ntk(1, 0)).is_err());
        assert!(ntk_pair(&[], &[], &KernelConfig::ntk(1, 0)).is_err());
        assert!(ntk_pair(&[1.0], &[1.0], &KernelConfig::ntk(1, 2)).is_err());
        assert!(ntk_pair(&[1.0], &[1.0], &KernelConfig::ntk(0, 0)).is_err());
        assert!(gram_matrix(&[], None, &KernelConfig::ntk(1, 0)).is_err());
    }

    #[test]
    fn gram_of_orthonormal_pair() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let g = gram_matrix(&x, None, &KernelConfig::ntk(1, 0)).unwrap();
        assert!(g.is_symmetric());
        assert_relative_eq!(g.get(0, 0), 2.0, epsilon = 1e-15);
        assert_relative_eq!(g.get(1, 1), 2.0, epsilon = 1e-15);
        assert_relative_eq!(g.get(0, 1), FRAC_1_PI, epsilon = 1e-15);
        assert_eq!(g.get(0, 1), g.get(1, 0));

        let e1 = vec![vec![1.0, 0.0]];
        let g = gram_matrix(&e1, Some(&e1), &KernelConfig::nngp(1)).unwrap();
        assert_eq!((g.rows(), g.cols()), (1, 1));
        assert_relative_eq!(g.get(0, 0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn normalization_examples() {
        let k = GramMatrix::from_vec(2, 2, vec![2.0, FRAC_1_PI, FRAC_1_PI, 2.0], true).unwrap();
        let (train, cross) = normalize_gram(&k, &k, &[2.0, 2.0], &[2.0, 2.0]).unwrap();
        assert_eq!(train.get(0, 0), 1.0);
        assert_relative_eq!(train.get(0, 1), 1.0 / (2.0 * core::f64::consts::PI), epsilon = 1e-15);
        assert_relative_eq!(cross.get(1, 0), 1.0 / (2.0 * core::f64::consts::PI), epsilon = 1e-15);

        let one = GramMatrix::from_vec(1, 1, vec![7.0], true).unwrap();
        let (t, _) = normalize_gram(&one, &one, &[7.0], &[7.0]).unwrap();
        assert_eq!(t.get(0, 0), 1.0);
    }

    #[test]
    fn normalization_names_bad_diagonal() {
        let k = GramMatrix::zeros(2, 2);
        let err = normalize_gram(&k, &k, &[1.0, 0.0], &[1.0, 1.0]).unwrap_err();
        match err {
            crate::Error::Degenerate(msg) => assert!(msg.contains("entry 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uci_grid_has_fifteen_kernels() {
        let grid = KernelConfig::uci_grid();
        assert_eq!(grid.len(), 15);
        assert!(grid.iter().all(|c| c.fixed_layers < c.depth));
    }

    #[test]
    fn covariance_pair_consistency() {
        assert!(CovariancePair::new(1.0, 4.0, 2.0).is_consistent());
        assert!(CovariancePair::new(1.0, 4.0, -2.0 - 1e-10).is_consistent());
        assert!(!CovariancePair::new(1.0, 4.0, 2.1).is_consistent());
        assert_eq!(CovariancePair::new(0.0, 4.0, 0.0).correlation(), 0.0);
    }
}
