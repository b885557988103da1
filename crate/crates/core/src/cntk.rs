//! Convolutional NTK: convolution layers, global average pooling and a
//! fully-connected readout.
//!
//! Every layer acts on a [`PixelCovarianceField`], the covariance between
//! each pixel position of one input and each pixel position of the other.
//! A layer first aggregates the field over the filter window (weight `1/q²`,
//! zero padding, stride one), then applies the ReLU arc-cosine maps
//! position pair by position pair, and finally folds the tangent field
//! forward: `θ ← agg(θ)·Σ̇ + Σ`. Pooling averages the final tangent field
//! over all position pairs; the readout's own contribution is already the
//! `+Σ` term of the last step, so pooling `θ` gives the kernel.
//!
//! The window structure is a [`Neighborhood`] table rather than hard-coded
//! 2-D arithmetic; with a 1×1 image and `q = 1` the recursion collapses to
//! the fully-connected kernel.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input_err, Result};
use crate::gram::GramMatrix;
use crate::kernel::{kappa0, kappa1, CovariancePair, RELU_C_SIGMA};
use crate::par;

/// `channels x height x width` tensor, channel-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(input_err!("tensor dimensions must be positive: {channels}x{height}x{width}"));
        }
        if values.len() != channels * height * width {
            return Err(input_err!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(input_err!("tensor value {i} is not finite"));
        }
        Ok(Self { channels, height, width, values })
    }

    /// A `c x 1 x 1` tensor holding a plain feature vector.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        Self::new(v.len(), 1, 1, v.to_vec())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at channel `c`, flattened position `p = row * width + col`.
    #[inline]
    pub fn at(&self, c: usize, p: usize) -> f64 {
        self.values[c * self.positions() + p]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * s).collect(), ..self.clone() }
    }

    /// Moves the value at position `p` to position `perm[p]` in every channel.
    pub fn permute_positions(&self, perm: &[usize]) -> Result<Self> {
        let n = self.positions();
        check_permutation(perm, n)?;
        let mut values = vec![0.0; self.values.len()];
        for c in 0..self.channels {
            for p in 0..n {
                values[c * n + perm[p]] = self.at(c, p);
            }
        }
        Ok(Self { values, ..self.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Padding {
    #[default]
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Pooling {
    #[default]
    GlobalAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Readout {
    #[default]
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CntkConfig {
    pub conv_layers: usize,
    /// Odd filter side length `q`.
    pub filter_size: usize,
    pub padding: Padding,
    pub pooling: Pooling,
    pub readout: Readout,
    pub c_sigma: f64,
}

impl Default for CntkConfig {
    fn default() -> Self {
        Self {
            conv_layers: 1,
            filter_size: 3,
            padding: Padding::Zero,
            pooling: Pooling::GlobalAverage,
            readout: Readout::FullyConnected,
            c_sigma: RELU_C_SIGMA,
        }
    }
}

impl CntkConfig {
    pub fn with_layers(conv_layers: usize) -> Self {
        Self { conv_layers, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_size == 0 || self.filter_size % 2 == 0 {
            return Err(input_err!("filter size must be odd and positive, got {}", self.filter_size));
        }
        if !(self.c_sigma > 0.0 && self.c_sigma.is_finite()) {
            return Err(input_err!("c_sigma must be positive, got {}", self.c_sigma));
        }
        Ok(())
    }
}

/// For each position, the positions covered by each filter tap (`None`
/// where the window hangs over the zero-padded border).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Neighborhood {
    positions: usize,
    taps: usize,
    table: Vec<Option<usize>>,
}

impl Neighborhood {
    /// Same-size 2-D convolution window of side `q` with zero padding.
    pub fn conv2d(height: usize, width: usize, q: usize) -> Self {
        let r = (q / 2) as isize;
        let positions = height * width;
        let mut table = Vec::with_capacity(positions * q * q);
        for i in 0..height as isize {
            for j in 0..width as isize {
                for di in -r..=r {
                    for dj in -r..=r {
                        let (ni, nj) = (i + di, j + dj);
                        let inside = ni >= 0 && nj >= 0 && ni < height as isize && nj < width as isize;
                        table.push(inside.then(|| ni as usize * width + nj as usize));
                    }
                }
            }
        }
        Self { positions, taps: q * q, table }
    }

    /// Arbitrary window structure: `table[p * taps + t]` is the position read
    /// by tap `t` when producing position `p`.
    pub fn from_table(positions: usize, taps: usize, table: Vec<Option<usize>>) -> Result<Self> {
        if taps == 0 || table.len() != positions * taps {
            return Err(input_err!("neighborhood table has {} entries, expected {positions}x{taps}", table.len()));
        }
        if table.iter().flatten().any(|&p| p >= positions) {
            return Err(input_err!("neighborhood table points outside {positions} positions"));
        }
        Ok(Self { positions, taps, table })
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    #[inline]
    pub fn neighbor(&self, p: usize, tap: usize) -> Option<usize> {
        self.table[p * self.taps + tap]
    }

    /// Relabels positions: position `p` becomes `perm[p]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.positions)?;
        let mut table = vec![None; self.table.len()];
        for p in 0..self.positions {
            for t in 0..self.taps {
                table[perm[p] * self.taps + t] = self.neighbor(p, t).map(|n| perm[n]);
            }
        }
        Ok(Self { table, ..self.clone() })
    }

    /// Averages `field` (a `P x P` matrix) over matching taps of both
    /// positions: `out[p][p'] = (1/taps) Σ_t field[n(p,t)][n(p',t)]`.
    fn aggregate(&self, field: &[f64]) -> Vec<f64> {
        let n = self.positions;
        let mut out = vec![0.0; n * n];
        if self.taps == 1 && self.table.iter().enumerate().all(|(p, v)| *v == Some(p)) {
            out.copy_from_slice(field);
            return out;
        }
        // per tap, the (position, neighbor) pairs that stay inside the image
        let valid: Vec<Vec<(usize, usize)>> =
            (0..self.taps).map(|t| (0..n).filter_map(|p| self.neighbor(p, t).map(|m| (p, m))).collect()).collect();
        for pairs in &valid {
            for &(p, np) in pairs {
                let src = &field[np * n..(np + 1) * n];
                let dst = &mut out[p * n..(p + 1) * n];
                for &(q, nq) in pairs {
                    dst[q] += src[nq];
                }
            }
        }
        let w = 1.0 / self.taps as f64;
        out.iter_mut().for_each(|v| *v *= w);
        out
    }

    fn aggregate_diagonal(&self, field: &[f64]) -> Vec<f64> {
        let n = self.positions;
        let w = 1.0 / self.taps as f64;
        (0..n)
            .map(|p| (0..self.taps).filter_map(|t| self.neighbor(p, t)).map(|m| field[m * n + m]).sum::<f64>() * w)
            .collect()
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(input_err!("permutation has length {}, expected {n}", perm.len()));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(input_err!("not a permutation of 0..{n}"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Position-by-position covariance state for one input pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelCovarianceField {
    height: usize,
    width: usize,
    /// `Σ[p][p']`, row-major `P x P`.
    pub sigma: Vec<f64>,
    /// `Σ̇[p][p']` of the most recent layer; `None` before the first layer.
    pub sigma_dot: Option<Vec<f64>>,
    /// Accumulated tangent field `θ[p][p']`.
    pub theta: Vec<f64>,
}

impl PixelCovarianceField {
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn sigma_at(&self, p: usize, q: usize) -> f64 {
        self.sigma[p * self.positions() + q]
    }

    #[inline]
    pub fn theta_at(&self, p: usize, q: usize) -> f64 {
        self.theta[p * self.positions() + q]
    }

    /// Mean of `θ` over all position pairs (global average pooling).
    pub fn pooled_theta(&self) -> f64 {
        mean(&self.theta)
    }

    /// Mean of `Σ` over all position pairs.
    pub fn pooled_sigma(&self) -> f64 {
        mean(&self.sigma)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_shapes(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(input_err!("tensor shape mismatch: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

/// `Σ[p][p'] = Σ_c a[c][p] b[c][p']`, with `θ` starting equal to `Σ`.
pub fn pixel_covariance_init(a: &ImageTensor, b: &ImageTensor) -> Result<PixelCovarianceField> {
    check_shapes(a, b)?;
    let n = a.positions();
    let mut sigma = vec![0.0; n * n];
    for c in 0..a.channels() {
        let ra = &a.values[c * n..(c + 1) * n];
        let rb = &b.values[c * n..(c + 1) * n];
        for (p, &va) in ra.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            let row = &mut sigma[p * n..(p + 1) * n];
            for (dst, &vb) in row.iter_mut().zip(rb) {
                *dst += va * vb;
            }
        }
    }
    Ok(PixelCovarianceField { height: a.height(), width: a.width(), theta: sigma.clone(), sigma, sigma_dot: None })
}

/// One convolution + ReLU layer, given the pre-activation variances of the
/// two inputs at this layer (`var_a[p] = agg(Σ_aa)[p][p]`, likewise `var_b`).
pub fn propagate_with_variances(
    field: &PixelCovarianceField,
    var_a: &[f64],
    var_b: &[f64],
    neighborhood: &Neighborhood,
    c_sigma: f64,
) -> Result<PixelCovarianceField> {
    let n = field.positions();
    if neighborhood.positions() != n || var_a.len() != n || var_b.len() != n {
        return Err(input_err!("field, variances and neighborhood disagree on position count"));
    }
    let pre = neighborhood.aggregate(&field.sigma);
    let mut theta = neighborhood.aggregate(&field.theta);
    let mut sigma = pre;
    let mut sigma_dot = vec![0.0; n * n];
    let half_c = 0.5 * c_sigma;
    for (p, &va) in var_a.iter().enumerate() {
        for (q, &vb) in var_b.iter().enumerate() {
            let k = p * n + q;
            let norm = libm::sqrt(va * vb);
            let lambda = CovariancePair::new(va, vb, sigma[k]).correlation();
            let s = half_c * norm * kappa1(lambda);
            let sd = half_c * kappa0(lambda);
            sigma[k] = s;
            sigma_dot[k] = sd;
            theta[k] = theta[k] * sd + s;
        }
    }
    Ok(PixelCovarianceField { height: field.height, width: field.width, sigma, sigma_dot: Some(sigma_dot), theta })
}

/// One convolution layer applied to a pair field. `diag_a` and `diag_b` are
/// the self-fields `(a, a)` and `(b, b)` at the same depth.
pub fn conv_propagate(
    field: &PixelCovarianceField,
    diag_a: &PixelCovarianceField,
    diag_b: &PixelCovarianceField,
    config: &CntkConfig,
) -> Result<PixelCovarianceField> {
    config.validate()?;
    if diag_a.positions() != field.positions() || diag_b.positions() != field.positions() {
        return Err(input_err!("diagonal fields do not match the pair field"));
    }
    let nb = Neighborhood::conv2d(field.height, field.width, config.filter_size);
    let var_a = nb.aggregate_diagonal(&diag_a.sigma);
    let var_b = nb.aggregate_diagonal(&diag_b.sigma);
    propagate_with_variances(field, &var_a, &var_b, &nb, config.c_sigma)
}

/// Per-image data reused across every pair the image takes part in: the
/// pre-activation variance at each position for each layer, and the
/// image's kernel value with itself.
#[derive(Debug, Clone, PartialEq)]
pub struct CntkTrajectory {
    variances: Vec<Vec<f64>>,
    self_value: f64,
}

impl CntkTrajectory {
    pub fn self_value(&self) -> f64 {
        self.self_value
    }
}

pub fn trajectory_with(
    image: &ImageTensor,
    layers: usize,
    neighborhood: &Neighborhood,
    c_sigma: f64,
) -> Result<CntkTrajectory> {
    let mut field = pixel_covariance_init(image, image)?;
    let mut variances = Vec::with_capacity(layers);
    for _ in 0..layers {
        let var = neighborhood.aggregate_diagonal(&field.sigma);
        field = propagate_with_variances(&field, &var, &var, neighborhood, c_sigma)?;
        variances.push(var);
    }
    Ok(CntkTrajectory { variances, self_value: field.pooled_theta() })
}

/// Kernel value for a pair given both trajectories and an explicit window
/// structure.
pub fn cntk_pair_with(
    a: &ImageTensor,
    b: &ImageTensor,
    traj_a: &CntkTrajectory,
    traj_b: &CntkTrajectory,
    neighborhood: &Neighborhood,
    c_sigma: f64,
) -> Result<f64> {
    let mut field = pixel_covariance_init(a, b)?;
    for (va, vb) in traj_a.variances.iter().zip(&traj_b.variances) {
        field = propagate_with_variances(&field, va, vb, neighborhood, c_sigma)?;
    }
    Ok(field.pooled_theta())
}

pub fn cntk_trajectory(image: &ImageTensor, config: &CntkConfig) -> Result<CntkTrajectory> {
    config.validate()?;
    let nb = Neighborhood::conv2d(image.height(), image.width(), config.filter_size);
    trajectory_with(image, config.conv_layers, &nb, config.c_sigma)
}

pub fn cntk_pair(a: &ImageTensor, b: &ImageTensor, config: &CntkConfig) -> Result<f64> {
    config.validate()?;
    check_shapes(a, b)?;
    let nb = Neighborhood::conv2d(a.height(), a.width(), config.filter_size);
    let ta = trajectory_with(a, config.conv_layers, &nb, config.c_sigma)?;
    let tb = trajectory_with(b, config.conv_layers, &nb, config.c_sigma)?;
    cntk_pair_with(a, b, &ta, &tb, &nb, config.c_sigma)
}

fn check_uniform(images: &[ImageTensor], shape: (usize, usize, usize)) -> Result<()> {
    match images.iter().position(|t| t.shape() != shape) {
        Some(i) => Err(input_err!("tensor {i} has shape {:?}, expected {shape:?}", images[i].shape())),
        None => Ok(()),
    }
}

/// Kernel values of each image with itself.
pub fn cntk_self_values(images: &[ImageTensor], config: &CntkConfig) -> Result<Vec<f64>> {
    Ok(trajectories(images, config)?.iter().map(|t| t.self_value).collect())
}

fn trajectories(images: &[ImageTensor], config: &CntkConfig) -> Result<Vec<CntkTrajectory>> {
    config.validate()?;
    if images.is_empty() {
        return Ok(Vec::new());
    }
    check_uniform(images, images[0].shape())?;
    let nb = Neighborhood::conv2d(images[0].height(), images[0].width(), config.filter_size);
    par::map_slice(images, |im| trajectory_with(im, config.conv_layers, &nb, config.c_sigma)).into_iter().collect()
}

/// Pairwise CNTK between two image lists; `b = None` gives the symmetric
/// Gram of `a` with itself.
pub fn cntk_gram(a: &[ImageTensor], b: Option<&[ImageTensor]>, config: &CntkConfig) -> Result<GramMatrix> {
    config.validate()?;
    if a.is_empty() || b.is_some_and(|b| b.is_empty()) {
        return Err(input_err!("cntk_gram needs nonempty input lists"));
    }
    let shape = a[0].shape();
    check_uniform(a, shape)?;
    if let Some(b) = b {
        check_uniform(b, shape).map_err(|e| input_err!("second list: {e}"))?;
    }
    let nb = Neighborhood::conv2d(shape.1, shape.2, config.filter_size);
    let traj_a = trajectories(a, config)?;
    let c = config.c_sigma;
    // shapes and window were validated above, so pair evaluation cannot fail
    let pair = |x: &ImageTensor, y: &ImageTensor, tx: &CntkTrajectory, ty: &CntkTrajectory| {
        cntk_pair_with(x, y, tx, ty, &nb, c).expect("validated shapes")
    };
    match b {
        None => Ok(GramMatrix::symmetric_from_fn(a.len(), |i, j| {
            if i == j {
                traj_a[i].self_value
            } else {
                pair(&a[i], &a[j], &traj_a[i], &traj_a[j])
            }
        })),
        Some(b) => {
            let traj_b = trajectories(b, config)?;
            Ok(GramMatrix::from_fn(a.len(), b.len(), |i, j| pair(&a[i], &b[j], &traj_a[i], &traj_b[j])))
        }
    }
}
