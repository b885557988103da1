//! Finite-width bias-free ReLU networks.
//!
//! `f⁽ʰ⁾ = W⁽ʰ⁾ g⁽ʰ⁻¹⁾`, `g⁽ʰ⁾ = s_h · relu(f⁽ʰ⁾)` with `s_h = √(c/d_h)` under
//! NTK parameterization and `s_h = 1` under He parameterization; the output
//! is `W⁽ᴸ⁺¹⁾ g⁽ᴸ⁾`. Gradients are computed by a hand-written two-pass
//! backward sweep, which is all the empirical tangent kernel and
//! full-batch gradient descent need.

pub mod conv;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{input_err, numerical_err, Result};
use crate::kernel::RELU_C_SIGMA;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Parameterization {
    /// Standard-normal weights with explicit `√(c/d_h)` forward scaling.
    #[default]
    Ntk,
    /// Weights drawn from `N(0, 2/fan_in)`, no forward scaling.
    He,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    #[default]
    Relu,
}

pub const DEFAULT_WIDTH: usize = 512;
pub const DEFAULT_EPOCHS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetConfig {
    pub widths: Vec<usize>,
    pub parameterization: Parameterization,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Number of output units (one per class for classification).
    pub outputs: usize,
    pub c_sigma: f64,
}

impl NetConfig {
    /// `depth` hidden layers of `width` units, scalar output.
    pub fn new(depth: usize, width: usize) -> Self {
        Self {
            widths: vec![width; depth],
            parameterization: Parameterization::Ntk,
            activation: Activation::Relu,
            learning_rate: 0.1,
            epochs: DEFAULT_EPOCHS,
            outputs: 1,
            c_sigma: RELU_C_SIGMA,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(input_err!("network needs at least one hidden layer"));
        }
        if self.widths.contains(&0) {
            return Err(input_err!("hidden widths must be positive: {:?}", self.widths));
        }
        if self.outputs == 0 {
            return Err(input_err!("network needs at least one output"));
        }
        if !(self.c_sigma > 0.0) {
            return Err(input_err!("c_sigma must be positive"));
        }
        Ok(())
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::new(1, DEFAULT_WIDTH)
    }
}

/// `W⁽¹⁾ … W⁽ᴸ⁺¹⁾`; `W⁽ʰ⁾` is `d_h x d_{h-1}` and the last is `outputs x d_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetWeights {
    pub matrices: Vec<DMatrix<f64>>,
    pub parameterization: Parameterization,
    pub c_sigma: f64,
}

pub fn init_weights(input_dim: usize, config: &NetConfig, seed: u64) -> Result<NetWeights> {
    config.validate()?;
    if input_dim == 0 {
        return Err(input_err!("input dimension must be positive"));
    }
    let mut dims = vec![input_dim];
    dims.extend_from_slice(&config.widths);
    dims.push(config.outputs);
    let mut matrices = Vec::with_capacity(dims.len() - 1);
    for (h, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let mut rng = stream_rng(seed, h as u64);
        let std = match config.parameterization {
            Parameterization::Ntk => 1.0,
            Parameterization::He => libm::sqrt(2.0 / fan_in as f64),
        };
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * std
            })
            .collect();
        matrices.push(DMatrix::from_row_slice(fan_out, fan_in, &data));
    }
    Ok(NetWeights { matrices, parameterization: config.parameterization, c_sigma: config.c_sigma })
}

/// Intermediate values of one forward pass.
struct Trace {
    /// `g⁽⁰⁾ = x, g⁽¹⁾, …, g⁽ᴸ⁾`
    post: Vec<DVector<f64>>,
    /// `f⁽¹⁾, …, f⁽ᴸ⁾`
    pre: Vec<DVector<f64>>,
    output: DVector<f64>,
}

impl NetWeights {
    pub fn depth(&self) -> usize {
        self.matrices.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.matrices[0].ncols()
    }

    pub fn outputs(&self) -> usize {
        self.matrices[self.depth()].nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.matrices.iter().map(|m| m.len()).sum()
    }

    /// Forward scaling applied after the ReLU of hidden layer `h` (1-based).
    fn scale(&self, h: usize) -> f64 {
        match self.parameterization {
            Parameterization::Ntk => libm::sqrt(self.c_sigma / self.matrices[h - 1].nrows() as f64),
            Parameterization::He => 1.0,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(input_err!("input has dimension {}, network expects {}", x.len(), self.input_dim()));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let depth = self.depth();
        let mut post = Vec::with_capacity(depth + 1);
        let mut pre = Vec::with_capacity(depth);
        post.push(DVector::from_column_slice(x));
        for h in 1..=depth {
            let f = &self.matrices[h - 1] * &post[h - 1];
            let s = self.scale(h);
            post.push(f.map(|v| s * v.max(0.0)));
            pre.push(f);
        }
        let output = &self.matrices[depth] * &post[depth];
        Trace { post, pre, output }
    }

    /// All output units at `x`.
    pub fn forward_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).output.iter().copied().collect())
    }

    /// Gradient of output unit `k` with respect to every weight matrix.
    pub fn parameter_gradient(&self, x: &[f64], k: usize) -> Result<Vec<DMatrix<f64>>> {
        self.check_input(x)?;
        if k >= self.outputs() {
            return Err(input_err!("output {k} out of range"));
        }
        let t = self.trace(x);
        let backs = self.backward(&t, k);
        Ok((0..=self.depth()).map(|h| &backs[h] * t.post[h].transpose()).collect())
    }

    /// `∂f_k/∂f⁽ʰ⁾` for `h = 1..=L+1` (index `h-1`); the last entry is the
    /// unit vector `e_k` at the output.
    fn backward(&self, t: &Trace, k: usize) -> Vec<DVector<f64>> {
        let depth = self.depth();
        let mut backs = vec![DVector::zeros(0); depth + 1];
        let mut b = DVector::zeros(self.outputs());
        b[k] = 1.0;
        backs[depth] = b;
        for h in (1..=depth).rev() {
            let dg = self.matrices[h].tr_mul(&backs[h]);
            let s = self.scale(h);
            backs[h - 1] = dg.zip_map(&t.pre[h - 1], |d, f| if f > 0.0 { s * d } else { 0.0 });
        }
        backs
    }
}

/// Scalar network output `f(w, x)`.
pub fn forward(x: &[f64], weights: &NetWeights) -> Result<f64> {
    if weights.outputs() != 1 {
        return Err(input_err!("forward expects a scalar-output network, this one has {} outputs", weights.outputs()));
    }
    Ok(weights.forward_all(x)?[0])
}

/// `Σ_h ⟨∂f(x)/∂W⁽ʰ⁾, ∂f(y)/∂W⁽ʰ⁾⟩` for output unit 0.
///
/// Each layer gradient is the outer product `b⁽ʰ⁾ g⁽ʰ⁻¹⁾ᵀ`, so the inner
/// product factors into `⟨b_x, b_y⟩⟨g_x, g_y⟩` and no gradient is
/// materialized.
pub fn empirical_ntk(x: &[f64], y: &[f64], weights: &NetWeights) -> Result<f64> {
    weights.check_input(x)?;
    weights.check_input(y)?;
    let (tx, ty) = (weights.trace(x), weights.trace(y));
    let (bx, by) = (weights.backward(&tx, 0), weights.backward(&ty, 0));
    Ok((0..=weights.depth()).map(|h| bx[h].dot(&by[h]) * tx.post[h].dot(&ty.post[h])).sum())
}

/// `count` pairs of random unit vectors, each oriented so that `xᵀy >= 0`
/// (the limit kernel of an anti-aligned pair can vanish).
pub fn unit_pairs(count: usize, dim: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = stream_rng(seed, UNIT_PAIR_STREAM);
    let mut unit = || {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
        v.into_iter().map(|a| a / norm).collect::<Vec<f64>>()
    };
    (0..count)
        .map(|_| {
            let x = unit();
            let mut y = unit();
            if x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
                y.iter_mut().for_each(|v| *v = -*v);
            }
            (x, y)
        })
        .collect()
}

const UNIT_PAIR_STREAM: u64 = 0x7061_6972;

/// Agreement between the empirical tangent kernel and the closed form at
/// one width.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WidthPoint {
    pub width: usize,
    /// Mean over pairs and seeds of `|Θ̂ − Θ| / Θ`.
    pub per_seed_error: f64,
    /// Mean over pairs of `|mean_seeds(Θ̂) − Θ| / Θ`.
    pub seed_averaged_error: f64,
}

/// Compares the empirical NTK of freshly initialised `depth`-layer nets
/// with `ntk_pair` on each input pair, for every width.
pub fn width_sweep(
    pairs: &[(Vec<f64>, Vec<f64>)],
    depth: usize,
    widths: &[usize],
    seeds: usize,
    base_seed: u64,
) -> Result<Vec<WidthPoint>> {
    if pairs.is_empty() || seeds == 0 {
        return Err(input_err!("width sweep needs at least one pair and one seed"));
    }
    let cfg = crate::kernel::KernelConfig::ntk(depth, 0);
    let exact: Vec<f64> = pairs.iter().map(|(x, y)| crate::kernel::ntk_pair(x, y, &cfg)).collect::<Result<_>>()?;
    if let Some(i) = exact.iter().position(|t| *t <= 0.0) {
        return Err(input_err!("pair {i} has a nonpositive limiting kernel"));
    }
    let dim = pairs[0].0.len();
    widths
        .iter()
        .map(|&width| {
            let net = NetConfig::new(depth, width);
            let per_seed: Vec<Vec<f64>> = crate::par::map_range(seeds, |s| {
                let w = init_weights(dim, &net, crate::rng::stream_id(&[base_seed, width as u64, s as u64]))?;
                pairs.iter().map(|(x, y)| empirical_ntk(x, y, &w)).collect::<Result<Vec<f64>>>()
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let n = seeds as f64;
            let mut per_seed_error = 0.0;
            let mut seed_averaged_error = 0.0;
            for (p, &t) in exact.iter().enumerate() {
                let vals: Vec<f64> = per_seed.iter().map(|v| v[p]).collect();
                per_seed_error += vals.iter().map(|v| (v - t).abs() / t).sum::<f64>() / n;
                seed_averaged_error += (vals.iter().sum::<f64>() / n - t).abs() / t;
            }
            let m = pairs.len() as f64;
            Ok(WidthPoint { width, per_seed_error: per_seed_error / m, seed_averaged_error: seed_averaged_error / m })
        })
        .collect()
}

/// One epoch's record of full-batch training.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    /// `(1/2n) Σᵢ ‖f(xᵢ) − yᵢ‖²` before this epoch's update.
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub weights: NetWeights,
    pub trace: Vec<EpochRecord>,
}

impl TrainedNet {
    pub fn predict(&self, inputs: &[Vec<f64>]) -> Result<Vec<usize>> {
        inputs.iter().map(|x| Ok(argmax(&self.weights.forward_all(x)?))).collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Full-batch gradient descent on the mean squared loss against `targets`
/// (one row of `outputs` values per input, one-hot for classification).
pub fn train_gd(inputs: &[Vec<f64>], targets: &[Vec<f64>], config: &NetConfig, seed: u64) -> Result<TrainedNet> {
    config.validate()?;
    let n = inputs.len();
    if n == 0 {
        return Err(input_err!("training set is empty"));
    }
    if targets.len() != n {
        return Err(input_err!("{} targets for {n} inputs", targets.len()));
    }
    let d = inputs[0].len();
    if inputs.iter().any(|x| x.len() != d) {
        return Err(input_err!("inputs have inconsistent dimensions"));
    }
    if targets.iter().any(|t| t.len() != config.outputs) {
        return Err(input_err!("targets must have {} columns", config.outputs));
    }
    let mut weights = init_weights(d, config, seed)?;
    let depth = weights.depth();
    // columns are samples
    let x = DMatrix::from_fn(d, n, |i, j| inputs[j][i]);
    let y = DMatrix::from_fn(config.outputs, n, |i, j| targets[j][i]);
    let labels: Vec<usize> = targets.iter().map(|t| argmax(t)).collect();
    let scales: Vec<f64> = (1..=depth).map(|h| weights.scale(h)).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut post = Vec::with_capacity(depth + 1);
        let mut pre = Vec::with_capacity(depth);
        post.push(x.clone());
        for h in 1..=depth {
            let f = &weights.matrices[h - 1] * &post[h - 1];
            let s = scales[h - 1];
            post.push(f.map(|v| s * v.max(0.0)));
            pre.push(f);
        }
        let out = &weights.matrices[depth] * &post[depth];
        let err = &out - &y;
        let loss = 0.5 * err.norm_squared() / n as f64;
        if !loss.is_finite() {
            return Err(numerical_err!("training diverged at epoch {epoch}: loss is {loss}"));
        }
        let correct = (0..n).filter(|&j| argmax(out.column(j).as_slice()) == labels[j]).count();
        trace.push(EpochRecord { epoch, loss, train_accuracy: correct as f64 / n as f64 });

        let mut back = err / n as f64;
        let mut grads = vec![DMatrix::zeros(0, 0); depth + 1];
        for h in (1..=depth + 1).rev() {
            grads[h - 1] = &back * post[h - 1].transpose();
            if h > 1 {
                let dg = weights.matrices[h - 1].tr_mul(&back);
                let s = scales[h - 2];
                back = dg.zip_map(&pre[h - 2], |d, f| if f > 0.0 { s * d } else { 0.0 });
            }
        }
        for (w, g) in weights.matrices.iter_mut().zip(&grads) {
            *w -= g * config.learning_rate;
        }
    }
    Ok(TrainedNet { weights, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn init_is_deterministic() {
        let cfg = NetConfig::new(2, 8);
        assert_eq!(init_weights(3, &cfg, 5).unwrap(), init_weights(3, &cfg, 5).unwrap());
        assert_ne!(init_weights(3, &cfg, 5).unwrap(), init_weights(3, &cfg, 6).unwrap());
    }

    #[test]
    fn init_variances() {
        let cfg = NetConfig::new(1, 10_000);
        let w = init_weights(1, &cfg, 1).unwrap();
        let var = w.matrices[0].iter().map(|v| v * v).sum::<f64>() / 10_000.0;
        assert!((var - 1.0).abs() < 0.05, "{var}");

        let mut cfg = NetConfig::new(1, 2000);
        cfg.parameterization = Parameterization::He;
        let w = init_weights(512, &cfg, 1).unwrap();
        let m = &w.matrices[0];
        let var = m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64;
        assert!((var / (2.0 / 512.0) - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn hand_evaluated_width_one_net() {
        let w = NetWeights {
            matrices: vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)],
            parameterization: Parameterization::Ntk,
            c_sigma: 2.0,
        };
        assert_relative_eq!(forward(&[1.0], &w).unwrap(), core::f64::consts::SQRT_2, epsilon = 1e-15);
        assert_eq!(forward(&[-1.0], &w).unwrap(), 0.0);
    }

    #[test]
    fn zero_input_and_homogeneity() {
        let w = init_weights(4, &NetConfig::new(3, 16), 2).unwrap();
        assert_eq!(forward(&[0.0; 4], &w).unwrap(), 0.0);
        let x = [0.3, -0.1, 0.7, 0.2];
        let cx: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
        assert_relative_eq!(forward(&cx, &w).unwrap(), 2.5 * forward(&x, &w).unwrap(), max_relative = 1e-12);
        assert!(forward(&[1.0], &w).is_err());
    }

    #[test]
    fn empirical_ntk_matches_materialized_gradients() {
        let w = init_weights(3, &NetConfig::new(2, 7), 11).unwrap();
        let x = [0.5, -0.2, 0.1];
        let y = [-0.3, 0.4, 0.9];
        let gx = w.parameter_gradient(&x, 0).unwrap();
        let gy = w.parameter_gradient(&y, 0).unwrap();
        let direct: f64 = gx.iter().zip(&gy).map(|(a, b)| a.dot(b)).sum();
        assert_relative_eq!(empirical_ntk(&x, &y, &w).unwrap(), direct, max_relative = 1e-12);
        assert!(empirical_ntk(&x, &x, &w).unwrap() >= 0.0);
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let xs = vec![vec![0.6, 0.8]];
        let ys = vec![vec![1.0]];
        let mut cfg = NetConfig::new(1, 64);
        cfg.learning_rate = 0.01;
        cfg.epochs = 12;
        let a = train_gd(&xs, &ys, &cfg, 3).unwrap();
        let b = train_gd(&xs, &ys, &cfg, 3).unwrap();
        assert_eq!(a.trace, b.trace);
        for w in a.trace[..11].windows(2) {
            assert!(w[1].loss < w[0].loss);
        }
    }

    #[test]
    fn divergence_names_epoch() {
        let xs = vec![vec![0.6, 0.8]];
        let ys = vec![vec![1e150]];
        let mut cfg = NetConfig::new(2, 64);
        cfg.learning_rate = 1.0;
        cfg.epochs = 10;
        match train_gd(&xs, &ys, &cfg, 1) {
            Err(crate::Error::Numerical(msg)) => assert!(msg.contains("epoch 1"), "{msg}"),
            other => panic!("expected divergence, got {:?}", other.map(|t| t.trace.last().copied())),
        }
    }
}
