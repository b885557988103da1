//! Small finite-width CNN matching the CNTK architecture: same-size
//! convolutions with `1/q` tap scaling, ReLU with `√(c/C)` scaling, global
//! average pooling and a linear readout. Only used to probe the infinite
//! channel limit on tiny images.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::cntk::{ImageTensor, Neighborhood};
use crate::error::{input_err, Result};
use crate::kernel::RELU_C_SIGMA;
use crate::rng::stream_rng;

#[derive(Debug, Clone)]
pub struct ConvNet {
    height: usize,
    width: usize,
    filter_size: usize,
    c_sigma: f64,
    neighborhood: Neighborhood,
    /// `layers[h][t]` is the `C_out x C_in` weight of tap `t` in layer `h`.
    layers: Vec<Vec<DMatrix<f64>>>,
    readout: DVector<f64>,
}

struct Forward {
    /// `g⁽⁰⁾ … g⁽ᴸ⁾`, each `channels x positions`
    post: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    pooled: DVector<f64>,
}

impl ConvNet {
    /// Standard-normal weights; `channels` hidden channels in every layer.
    pub fn init(
        input_channels: usize,
        height: usize,
        width: usize,
        conv_layers: usize,
        channels: usize,
        filter_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if filter_size % 2 == 0 || channels == 0 || input_channels == 0 {
            return Err(input_err!("invalid conv net shape"));
        }
        let taps = filter_size * filter_size;
        let mut stream = 0u64;
        let mut normal_matrix = |r: usize, c: usize| {
            let mut rng = stream_rng(seed, stream);
            stream += 1;
            DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng))
        };
        let mut layers = Vec::with_capacity(conv_layers);
        for h in 0..conv_layers {
            let c_in = if h == 0 { input_channels } else { channels };
            layers.push((0..taps).map(|_| normal_matrix(channels, c_in)).collect());
        }
        let out_channels = if conv_layers == 0 { input_channels } else { channels };
        let readout = normal_matrix(out_channels, 1).column(0).into_owned();
        Ok(Self {
            height,
            width,
            filter_size,
            c_sigma: RELU_C_SIGMA,
            neighborhood: Neighborhood::conv2d(height, width, filter_size),
            layers,
            readout,
        })
    }

    fn positions(&self) -> usize {
        self.height * self.width
    }

    fn input_matrix(&self, x: &ImageTensor) -> Result<DMatrix<f64>> {
        if x.height() != self.height || x.width() != self.width {
            return Err(input_err!(
                "image is {}x{}, net expects {}x{}",
                x.height(),
                x.width(),
                self.height,
                self.width
            ));
        }
        let p = self.positions();
        Ok(DMatrix::from_fn(x.channels(), p, |c, q| x.at(c, q)))
    }

    fn conv(&self, h: usize, input: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.positions();
        let inv_q = 1.0 / self.filter_size as f64;
        let mut out = DMatrix::zeros(self.layers[h][0].nrows(), p);
        for (t, w) in self.layers[h].iter().enumerate() {
            let wx = w * input;
            for pos in 0..p {
                if let Some(n) = self.neighborhood.neighbor(pos, t) {
                    let mut col = out.column_mut(pos);
                    col.axpy(inv_q, &wx.column(n), 1.0);
                }
            }
        }
        out
    }

    fn forward_trace(&self, x: &ImageTensor) -> Result<Forward> {
        let mut post = vec![self.input_matrix(x)?];
        let mut pre = Vec::with_capacity(self.layers.len());
        for h in 0..self.layers.len() {
            let f = self.conv(h, &post[h]);
            let s = libm::sqrt(self.c_sigma / f.nrows() as f64);
            post.push(f.map(|v| s * v.max(0.0)));
            pre.push(f);
        }
        let last = post.last().expect("input layer present");
        let pooled = last.column_mean();
        Ok(Forward { post, pre, pooled })
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<f64> {
        Ok(self.readout.dot(&self.forward_trace(x)?.pooled))
    }

    /// Gradients for every conv tap weight followed by the readout.
    pub fn parameter_gradient(&self, x: &ImageTensor) -> Result<Vec<DMatrix<f64>>> {
        let fw = self.forward_trace(x)?;
        let p = self.positions();
        let inv_q = 1.0 / self.filter_size as f64;
        let depth = self.layers.len();
        let mut grads: Vec<DMatrix<f64>> = Vec::new();
        // ∂f/∂g⁽ᴸ⁾: the readout spread evenly over positions
        let mut dg = DMatrix::from_fn(self.readout.len(), p, |c, _| self.readout[c] / p as f64);
        for h in (0..depth).rev() {
            let s = libm::sqrt(self.c_sigma / fw.pre[h].nrows() as f64);
            let back = dg.zip_map(&fw.pre[h], |d, f| if f > 0.0 { s * d } else { 0.0 });
            let input = &fw.post[h];
            let mut layer_grads = Vec::with_capacity(self.layers[h].len());
            let mut next_dg = DMatrix::zeros(input.nrows(), p);
            for (t, w) in self.layers[h].iter().enumerate() {
                let mut gather = DMatrix::zeros(input.nrows(), p);
                for pos in 0..p {
                    if let Some(n) = self.neighborhood.neighbor(pos, t) {
                        gather.set_column(pos, &input.column(n));
                    }
                }
                layer_grads.push(&back * gather.transpose() * inv_q);
                let wb = w.tr_mul(&back);
                for pos in 0..p {
                    if let Some(n) = self.neighborhood.neighbor(pos, t) {
                        let mut col = next_dg.column_mut(n);
                        col.axpy(inv_q, &wb.column(pos), 1.0);
                    }
                }
            }
            grads.splice(0..0, layer_grads);
            dg = next_dg;
        }
        grads.push(DMatrix::from_column_slice(fw.pooled.len(), 1, fw.pooled.as_slice()));
        Ok(grads)
    }

    /// Inner product of parameter gradients at two inputs.
    pub fn empirical_ntk(&self, a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
        let ga = self.parameter_gradient(a)?;
        let gb = self.parameter_gradient(b)?;
        Ok(ga.iter().zip(&gb).map(|(x, y)| x.dot(y)).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cntk::{cntk_pair, CntkConfig};
    use approx::assert_relative_eq;

    #[test]
    fn zero_layers_is_pooled_linear_model() {
        let net = ConvNet::init(2, 2, 2, 0, 4, 3, 1).unwrap();
        let a = ImageTensor::new(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        let b = ImageTensor::new(2, 2, 2, vec![0.5, 0.5, 1.0, -1.0, 2.0, 2.0, 0.0, 1.0]).unwrap();
        let emp = net.empirical_ntk(&a, &b).unwrap();
        let exact = cntk_pair(&a, &b, &CntkConfig::with_layers(0)).unwrap();
        assert_relative_eq!(emp, exact, epsilon = 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = ConvNet::init(2, 3, 3, 2, 3, 3, 4).unwrap();
        let x = ImageTensor::new(2, 3, 3, (0..18).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect()).unwrap();
        let grads = net.parameter_gradient(&x).unwrap();
        let eps = 1e-5;
        for (h, tap, r, c) in [(0, 4, 1, 0), (1, 0, 2, 2), (1, 8, 0, 1), (0, 2, 2, 1)] {
            let orig = net.layers[h][tap][(r, c)];
            net.layers[h][tap][(r, c)] = orig + eps;
            let up = net.forward(&x).unwrap();
            net.layers[h][tap][(r, c)] = orig - eps;
            let down = net.forward(&x).unwrap();
            net.layers[h][tap][(r, c)] = orig;
            let fd = (up - down) / (2.0 * eps);
            let an = grads[h * 9 + tap][(r, c)];
            assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "layer {h} tap {tap}: {fd} vs {an}");
        }
    }
}
