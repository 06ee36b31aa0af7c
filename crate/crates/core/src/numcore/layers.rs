//! Parameterized layers backed by a [`ParamSet`].

use rand::Rng;

use super::ops::{self, LstmCache, LstmInputGrads, LstmWeights};
use super::params::{ParamId, ParamSet};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::Result;

/// Fully connected layer `y = x·W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng + ?Sized>(ps: &mut ParamSet<T>, name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let w = ps.add_uniform(format!("{name}.w"), &[in_dim, out_dim], in_dim, rng);
        let b = ps.add(format!("{name}.b"), Tensor::zeros(&[out_dim]));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::dense_forward(x, ps.value(self.w), ps.value(self.b))
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward<T: Scalar>(&self, ps: &mut ParamSet<T>, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (values, grads) = ps.parts_mut();
        let [dw, db] = grads
            .get_disjoint_mut([self.w.index(), self.b.index()])
            .expect("distinct parameters");
        ops::dense_backward(x, &values[self.w.index()], dy, dw, db)
    }
}

/// Spatial graph convolution `Â·X·W` (no bias). Convolution weights use
/// He-uniform initialization.
#[derive(Debug, Clone, Copy)]
pub struct GraphConv {
    pub w: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
}

impl GraphConv {
    pub fn new<T: Scalar, R: Rng + ?Sized>(ps: &mut ParamSet<T>, name: &str, in_ch: usize, out_ch: usize, rng: &mut R) -> Self {
        let w = ps.add_he_uniform(format!("{name}.w"), &[in_ch, out_ch], in_ch, rng);
        Self { w, in_ch, out_ch }
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, a_hat: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::graph_conv_forward(x, a_hat, ps.value(self.w))
    }

    pub fn backward<T: Scalar>(&self, ps: &mut ParamSet<T>, a_hat: &Tensor<T>, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (w, dw) = ps.value_and_grad_mut(self.w);
        ops::graph_conv_backward(x, a_hat, w, dy, dw)
    }
}

fn add_channel_bias<T: Scalar>(y: &mut Tensor<T>, b: &Tensor<T>) {
    let c = b.len();
    for row in y.data_mut().chunks_mut(c) {
        for (v, &bb) in row.iter_mut().zip(b.data()) {
            *v += bb;
        }
    }
}

fn accumulate_channel_bias<T: Scalar>(db: &mut Tensor<T>, dy: &Tensor<T>) {
    let c = db.len();
    let d = db.data_mut();
    for row in dy.data().chunks(c) {
        for (o, &g) in d.iter_mut().zip(row) {
            *o += g;
        }
    }
}

/// Temporal convolution with per-channel bias.
#[derive(Debug, Clone, Copy)]
pub struct TemporalConv {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub k: usize,
    pub stride: usize,
}

impl TemporalConv {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        k: usize,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let kernel = ps.add_he_uniform(format!("{name}.kernel"), &[k, in_ch, out_ch], k * in_ch, rng);
        let bias = ps.add(format!("{name}.b"), Tensor::zeros(&[out_ch]));
        Self { kernel, bias, k, stride }
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = ops::temporal_conv_forward(x, ps.value(self.kernel), self.stride)?;
        add_channel_bias(&mut y, ps.value(self.bias));
        Ok(y)
    }

    pub fn backward<T: Scalar>(&self, ps: &mut ParamSet<T>, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        accumulate_channel_bias(ps.grad_mut(self.bias), dy);
        let (k, dk) = ps.value_and_grad_mut(self.kernel);
        ops::temporal_conv_backward(x, k, self.stride, dy, dk)
    }
}

/// Transposed temporal convolution with per-channel bias.
#[derive(Debug, Clone, Copy)]
pub struct TemporalConvTranspose {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub k: usize,
    pub stride: usize,
}

impl TemporalConvTranspose {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        k: usize,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let kernel = ps.add_he_uniform(format!("{name}.kernel"), &[k, in_ch, out_ch], in_ch, rng);
        let bias = ps.add(format!("{name}.b"), Tensor::zeros(&[out_ch]));
        Self { kernel, bias, k, stride }
    }

    pub fn forward<T: Scalar>(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = ops::temporal_conv_transpose_forward(x, ps.value(self.kernel), self.stride)?;
        add_channel_bias(&mut y, ps.value(self.bias));
        Ok(y)
    }

    pub fn backward<T: Scalar>(&self, ps: &mut ParamSet<T>, x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        accumulate_channel_bias(ps.grad_mut(self.bias), dy);
        let (k, dk) = ps.value_and_grad_mut(self.kernel);
        ops::temporal_conv_transpose_backward(x, k, self.stride, dy, dk)
    }
}

/// LSTM cell parameters. The forget-gate bias starts at 1.
#[derive(Debug, Clone, Copy)]
pub struct Lstm {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<T: Scalar, R: Rng + ?Sized>(ps: &mut ParamSet<T>, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let w_x = ps.add_uniform(format!("{name}.w_x"), &[input, 4 * hidden], input, rng);
        let w_h = ps.add_uniform(format!("{name}.w_h"), &[hidden, 4 * hidden], hidden, rng);
        let mut b = Tensor::zeros(&[4 * hidden]);
        for u in hidden..2 * hidden {
            b.data_mut()[u] = T::one();
        }
        let bias = ps.add(format!("{name}.b"), b);
        Self { w_x, w_h, bias, input, hidden }
    }

    pub fn weights<'a, T: Scalar>(&self, ps: &'a ParamSet<T>) -> LstmWeights<'a, T> {
        LstmWeights {
            w_x: ps.value(self.w_x),
            w_h: ps.value(self.w_h),
            bias: ps.value(self.bias),
        }
    }

    pub fn zero_state<T: Scalar>(&self, batch: usize) -> (Tensor<T>, Tensor<T>) {
        (Tensor::zeros(&[batch, self.hidden]), Tensor::zeros(&[batch, self.hidden]))
    }

    pub fn step<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Tensor<T>,
        h: &Tensor<T>,
        c: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, LstmCache<T>)> {
        ops::lstm_step(x, h, c, self.weights(ps))
    }

    pub fn step_backward<T: Scalar>(
        &self,
        ps: &mut ParamSet<T>,
        cache: &LstmCache<T>,
        dh: &Tensor<T>,
        dc: &Tensor<T>,
    ) -> Result<LstmInputGrads<T>> {
        let (values, grads) = ps.parts_mut();
        let weights = LstmWeights {
            w_x: &values[self.w_x.index()],
            w_h: &values[self.w_h.index()],
            bias: &values[self.bias.index()],
        };
        let [gx, gh, gb] = grads
            .get_disjoint_mut([self.w_x.index(), self.w_h.index(), self.bias.index()])
            .expect("distinct parameters");
        ops::lstm_step_backward(cache, weights, dh, dc, gx, gh, gb)
    }
}
