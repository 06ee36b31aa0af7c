//! Forward and backward kernels for the layers the architecture uses.
//!
//! Backward functions accumulate parameter gradients into caller-owned
//! buffers (`+=`) and return fresh input gradients.

use rand::Rng;

use super::scalar::Scalar;
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

fn rows_cols<T: Scalar>(x: &Tensor<T>) -> (usize, usize) {
    let s = x.shape();
    let cols = *s.last().expect("rank >= 1");
    (x.len() / cols, cols)
}

// ---------------------------------------------------------------------------
// Dense

/// `y = x·W + b`. Leading axes of `x` are flattened into the batch.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if w.rank() != 2 || x.shape().last() != Some(&w.shape()[0]) {
        return Err(Error::shape("dense_forward", x.shape(), w.shape()));
    }
    let out = w.shape()[1];
    if b.shape() != [out] {
        return Err(Error::shape("dense_forward(bias)", w.shape(), b.shape()));
    }
    let (rows, inp) = rows_cols(x);
    let mut y = vec![T::zero(); rows * out];
    for r in 0..rows {
        y[r * out..(r + 1) * out].copy_from_slice(b.data());
    }
    gemm(false, false, rows, inp, out, T::one(), x.data(), w.data(), T::one(), &mut y);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out;
    Tensor::new(&shape, y)
}

/// Accumulates `dW += xᵀ·dy`, `db += Σ dy`; returns `dx = dy·Wᵀ`.
pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (rows, inp) = rows_cols(x);
    let out = w.shape()[1];
    if dy.len() != rows * out {
        return Err(Error::shape("dense_backward", x.shape(), dy.shape()));
    }
    gemm(true, false, inp, rows, out, T::one(), x.data(), dy.data(), T::one(), dw.data_mut());
    let dbd = db.data_mut();
    for r in 0..rows {
        for (o, g) in dbd.iter_mut().zip(&dy.data()[r * out..(r + 1) * out]) {
            *o += *g;
        }
    }
    let mut dx = vec![T::zero(); rows * inp];
    gemm(false, true, rows, out, inp, T::one(), dy.data(), w.data(), T::zero(), &mut dx);
    Tensor::new(x.shape(), dx)
}

// ---------------------------------------------------------------------------
// Spatial graph convolution

/// Per frame `dst[f] += Â·src[f]` (or `Âᵀ·src[f]`), visiting only the
/// nonzeros of `Â`; skeleton adjacencies are sparse.
fn mix_joints<T: Scalar>(a_hat: &Tensor<T>, transpose: bool, src: &[T], dst: &mut [T], c: usize) {
    let j = a_hat.shape()[0];
    let mut nz = Vec::new();
    for r in 0..j {
        for q in 0..j {
            let a = a_hat.data()[r * j + q];
            if a != T::zero() {
                nz.push(if transpose { (q, r, a) } else { (r, q, a) });
            }
        }
    }
    for (sf, df) in src.chunks(j * c).zip(dst.chunks_mut(j * c)) {
        for &(r, q, a) in &nz {
            let (out, inp) = (&mut df[r * c..(r + 1) * c], &sf[q * c..(q + 1) * c]);
            for (o, &v) in out.iter_mut().zip(inp) {
                *o += a * v;
            }
        }
    }
}

/// Per frame: `Y[t] = Â · X[t] · W`. `x` is `[.., J, C_in]`, `a_hat` is `J×J`.
pub fn graph_conv_forward<T: Scalar>(x: &Tensor<T>, a_hat: &Tensor<T>, w: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() < 2 || a_hat.rank() != 2 || a_hat.shape()[0] != a_hat.shape()[1] || s[s.len() - 2] != a_hat.shape()[0] {
        return Err(Error::shape("graph_conv_forward", s, a_hat.shape()));
    }
    let (j, cin) = (s[s.len() - 2], s[s.len() - 1]);
    if w.rank() != 2 || w.shape()[0] != cin {
        return Err(Error::shape("graph_conv_forward(weight)", s, w.shape()));
    }
    let cout = w.shape()[1];
    let frames = x.len() / (j * cin);
    // Z = X·W over all joints at once, then mix joints frame by frame.
    let mut z = vec![T::zero(); frames * j * cout];
    gemm(false, false, frames * j, cin, cout, T::one(), x.data(), w.data(), T::zero(), &mut z);
    let mut y = vec![T::zero(); frames * j * cout];
    mix_joints(a_hat, false, &z, &mut y, cout);
    let mut shape = s.to_vec();
    *shape.last_mut().unwrap() = cout;
    Tensor::new(&shape, y)
}

/// Accumulates `dW`; returns `dX`.
pub fn graph_conv_backward<T: Scalar>(
    x: &Tensor<T>,
    a_hat: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    dw: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let s = x.shape();
    let (j, cin) = (s[s.len() - 2], s[s.len() - 1]);
    let cout = w.shape()[1];
    let frames = x.len() / (j * cin);
    if dy.len() != frames * j * cout {
        return Err(Error::shape("graph_conv_backward", s, dy.shape()));
    }
    let mut dz = vec![T::zero(); frames * j * cout];
    mix_joints(a_hat, true, dy.data(), &mut dz, cout);
    gemm(true, false, cin, frames * j, cout, T::one(), x.data(), &dz, T::one(), dw.data_mut());
    let mut dx = vec![T::zero(); x.len()];
    gemm(false, true, frames * j, cout, cin, T::one(), &dz, w.data(), T::zero(), &mut dx);
    Tensor::new(s, dx)
}

// ---------------------------------------------------------------------------
// Temporal convolution over the frame axis, independently per joint

/// Output length of a valid (unpadded) temporal convolution.
pub fn conv_out_len(t: usize, k: usize, stride: usize) -> Option<usize> {
    if stride == 0 || t < k {
        None
    } else {
        Some((t - k) / stride + 1)
    }
}

fn check_temporal<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let s = x.shape();
    let ks = kernel.shape();
    if s.len() != 4 || ks.len() != 3 || ks[1] != s[3] {
        return Err(Error::shape(op, s, ks));
    }
    Ok((s[0], s[1], s[2], s[3], ks[0], ks[2]))
}

fn im2col<T: Scalar>(x: &Tensor<T>, k: usize, stride: usize, t_out: usize) -> Vec<T> {
    let s = x.shape();
    let (b, t, j, c) = (s[0], s[1], s[2], s[3]);
    let kc = k * c;
    let mut col = vec![T::zero(); b * t_out * j * kc];
    let xd = x.data();
    for bi in 0..b {
        for to in 0..t_out {
            for ji in 0..j {
                let row = ((bi * t_out + to) * j + ji) * kc;
                for kk in 0..k {
                    let src = ((bi * t + to * stride + kk) * j + ji) * c;
                    col[row + kk * c..row + (kk + 1) * c].copy_from_slice(&xd[src..src + c]);
                }
            }
        }
    }
    col
}

/// `Y[b,t',j,:] = Σ_κ X[b, t'·stride+κ, j, :] · K[κ]`; `x` is `[B,T,J,C]`,
/// `kernel` is `[k, C, C']`.
pub fn temporal_conv_forward<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let (b, t, j, _c, k, cout) = check_temporal(x, kernel, "temporal_conv_forward")?;
    if k % 2 == 0 {
        return Err(Error::InvalidArgument(format!("temporal kernel size must be odd, got {k}")));
    }
    let t_out = conv_out_len(t, k, stride).ok_or_else(|| {
        Error::InvalidArgument(format!("temporal conv needs T >= k and stride >= 1 (T={t}, k={k}, stride={stride})"))
    })?;
    let col = im2col(x, k, stride, t_out);
    let rows = b * t_out * j;
    let kc = kernel.shape()[0] * kernel.shape()[1];
    let mut y = vec![T::zero(); rows * cout];
    gemm(false, false, rows, kc, cout, T::one(), &col, kernel.data(), T::zero(), &mut y);
    Tensor::new(&[b, t_out, j, cout], y)
}

/// Accumulates `dK`; returns `dX`.
pub fn temporal_conv_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    dy: &Tensor<T>,
    dkernel: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, t, j, c, k, cout) = check_temporal(x, kernel, "temporal_conv_backward")?;
    let t_out = conv_out_len(t, k, stride).ok_or_else(|| Error::InvalidArgument("T < k".into()))?;
    if dy.shape() != [b, t_out, j, cout] {
        return Err(Error::shape("temporal_conv_backward", &[b, t_out, j, cout], dy.shape()));
    }
    let col = im2col(x, k, stride, t_out);
    let rows = b * t_out * j;
    let kc = k * c;
    gemm(true, false, kc, rows, cout, T::one(), &col, dy.data(), T::one(), dkernel.data_mut());
    let mut dcol = vec![T::zero(); rows * kc];
    gemm(false, true, rows, cout, kc, T::one(), dy.data(), kernel.data(), T::zero(), &mut dcol);
    let mut dx = vec![T::zero(); x.len()];
    for bi in 0..b {
        for to in 0..t_out {
            for ji in 0..j {
                let row = ((bi * t_out + to) * j + ji) * kc;
                for kk in 0..k {
                    let dst = ((bi * t + to * stride + kk) * j + ji) * c;
                    for ci in 0..c {
                        dx[dst + ci] += dcol[row + kk * c + ci];
                    }
                }
            }
        }
    }
    Tensor::new(x.shape(), dx)
}

/// Output length of a transposed temporal convolution.
pub fn conv_transpose_out_len(t: usize, k: usize, stride: usize) -> usize {
    (t - 1) * stride + k
}

/// Adjoint of [`temporal_conv_forward`]: `Y[b, t·stride+κ, j, :] += X[b,t,j,:]·K[κ]`.
/// `kernel` is `[k, C, C']`; output is `[B, (T-1)·stride+k, J, C']`.
pub fn temporal_conv_transpose_forward<T: Scalar>(x: &Tensor<T>, kernel: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let (b, t, j, c, k, cout) = check_temporal(x, kernel, "temporal_conv_transpose_forward")?;
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be >= 1".into()));
    }
    let t_out = conv_transpose_out_len(t, k, stride);
    let rows = b * t * j;
    let mut y = vec![T::zero(); b * t_out * j * cout];
    let mut z = vec![T::zero(); rows * cout];
    for kk in 0..k {
        let kblk = &kernel.data()[kk * c * cout..(kk + 1) * c * cout];
        gemm(false, false, rows, c, cout, T::one(), x.data(), kblk, T::zero(), &mut z);
        for bi in 0..b {
            for ti in 0..t {
                let to = ti * stride + kk;
                for ji in 0..j {
                    let src = ((bi * t + ti) * j + ji) * cout;
                    let dst = ((bi * t_out + to) * j + ji) * cout;
                    for co in 0..cout {
                        y[dst + co] += z[src + co];
                    }
                }
            }
        }
    }
    Tensor::new(&[b, t_out, j, cout], y)
}

/// Accumulates `dK`; returns `dX`.
pub fn temporal_conv_transpose_backward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    dy: &Tensor<T>,
    dkernel: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    let (b, t, j, c, k, cout) = check_temporal(x, kernel, "temporal_conv_transpose_backward")?;
    let t_out = conv_transpose_out_len(t, k, stride);
    if dy.shape() != [b, t_out, j, cout] {
        return Err(Error::shape("temporal_conv_transpose_backward", &[b, t_out, j, cout], dy.shape()));
    }
    let rows = b * t * j;
    let mut dx = vec![T::zero(); x.len()];
    let mut g = vec![T::zero(); rows * cout];
    for kk in 0..k {
        for bi in 0..b {
            for ti in 0..t {
                let to = ti * stride + kk;
                for ji in 0..j {
                    let dst = ((bi * t + ti) * j + ji) * cout;
                    let src = ((bi * t_out + to) * j + ji) * cout;
                    g[dst..dst + cout].copy_from_slice(&dy.data()[src..src + cout]);
                }
            }
        }
        let kblk = &kernel.data()[kk * c * cout..(kk + 1) * c * cout];
        gemm(false, true, rows, cout, c, T::one(), &g, kblk, T::one(), &mut dx);
        let dk = &mut dkernel.data_mut()[kk * c * cout..(kk + 1) * c * cout];
        gemm(true, false, c, rows, cout, T::one(), x.data(), &g, T::one(), dk);
    }
    Tensor::new(x.shape(), dx)
}

// ---------------------------------------------------------------------------
// LSTM cell

/// Borrowed LSTM weights. Gate column blocks are ordered `i, f, g, o`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a, T> {
    /// `[d_in × 4·d_h]`
    pub w_x: &'a Tensor<T>,
    /// `[d_h × 4·d_h]`
    pub w_h: &'a Tensor<T>,
    /// `[4·d_h]`
    pub bias: &'a Tensor<T>,
}

/// Values saved by [`lstm_step`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    pub x: Tensor<T>,
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    /// Post-activation gates `[B × 4·d_h]`.
    pub gates: Vec<T>,
    pub tanh_c_next: Vec<T>,
}

/// Gradients of one LSTM step with respect to its inputs.
#[derive(Debug, Clone)]
pub struct LstmInputGrads<T> {
    pub dx: Tensor<T>,
    pub dh: Tensor<T>,
    pub dc: Tensor<T>,
}

#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Standard LSTM cell; returns `(h', c', cache)`.
pub fn lstm_step<T: Scalar>(
    x: &Tensor<T>,
    h: &Tensor<T>,
    c: &Tensor<T>,
    p: LstmWeights<'_, T>,
) -> Result<(Tensor<T>, Tensor<T>, LstmCache<T>)> {
    if x.rank() != 2 || h.rank() != 2 || c.shape() != h.shape() || x.shape()[0] != h.shape()[0] {
        return Err(Error::shape("lstm_step", x.shape(), h.shape()));
    }
    let (batch, din) = (x.shape()[0], x.shape()[1]);
    let dh = h.shape()[1];
    if p.w_x.shape() != [din, 4 * dh] {
        return Err(Error::shape("lstm_step(w_x)", &[din, 4 * dh], p.w_x.shape()));
    }
    if p.w_h.shape() != [dh, 4 * dh] || p.bias.shape() != [4 * dh] {
        return Err(Error::shape("lstm_step(w_h)", &[dh, 4 * dh], p.w_h.shape()));
    }
    let g4 = 4 * dh;
    let mut gates = vec![T::zero(); batch * g4];
    for r in 0..batch {
        gates[r * g4..(r + 1) * g4].copy_from_slice(p.bias.data());
    }
    gemm(false, false, batch, din, g4, T::one(), x.data(), p.w_x.data(), T::one(), &mut gates);
    gemm(false, false, batch, dh, g4, T::one(), h.data(), p.w_h.data(), T::one(), &mut gates);
    let mut h_next = vec![T::zero(); batch * dh];
    let mut c_next = vec![T::zero(); batch * dh];
    let mut tanh_c = vec![T::zero(); batch * dh];
    let cd = c.data();
    for r in 0..batch {
        let g = &mut gates[r * g4..(r + 1) * g4];
        for u in 0..dh {
            let i = sigmoid(g[u]);
            let f = sigmoid(g[dh + u]);
            let gg = g[2 * dh + u].tanh();
            let o = sigmoid(g[3 * dh + u]);
            g[u] = i;
            g[dh + u] = f;
            g[2 * dh + u] = gg;
            g[3 * dh + u] = o;
            let cn = f * cd[r * dh + u] + i * gg;
            let tc = cn.tanh();
            c_next[r * dh + u] = cn;
            tanh_c[r * dh + u] = tc;
            h_next[r * dh + u] = o * tc;
        }
    }
    let cache = LstmCache {
        x: x.clone(),
        h: h.clone(),
        c: c.clone(),
        gates,
        tanh_c_next: tanh_c,
    };
    Ok((Tensor::new(&[batch, dh], h_next)?, Tensor::new(&[batch, dh], c_next)?, cache))
}

/// Backward through one LSTM step given upstream `dh'` and `dc'`.
/// Accumulates weight gradients into `dw_x`, `dw_h`, `dbias`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_backward<T: Scalar>(
    cache: &LstmCache<T>,
    p: LstmWeights<'_, T>,
    dh_next: &Tensor<T>,
    dc_next: &Tensor<T>,
    dw_x: &mut Tensor<T>,
    dw_h: &mut Tensor<T>,
    dbias: &mut Tensor<T>,
) -> Result<LstmInputGrads<T>> {
    let (batch, din) = (cache.x.shape()[0], cache.x.shape()[1]);
    let dh = cache.h.shape()[1];
    if dh_next.shape() != [batch, dh] || dc_next.shape() != [batch, dh] {
        return Err(Error::shape("lstm_step_backward", &[batch, dh], dh_next.shape()));
    }
    let g4 = 4 * dh;
    let mut dpre = vec![T::zero(); batch * g4];
    let mut dc_prev = vec![T::zero(); batch * dh];
    let one = T::one();
    for r in 0..batch {
        let g = &cache.gates[r * g4..(r + 1) * g4];
        for u in 0..dh {
            let k = r * dh + u;
            let (i, f, gg, o) = (g[u], g[dh + u], g[2 * dh + u], g[3 * dh + u]);
            let tc = cache.tanh_c_next[k];
            let dhv = dh_next.data()[k];
            let d_o = dhv * tc;
            let dc = dc_next.data()[k] + dhv * o * (one - tc * tc);
            let d_i = dc * gg;
            let d_g = dc * i;
            let d_f = dc * cache.c.data()[k];
            dc_prev[k] = dc * f;
            let d = &mut dpre[r * g4..(r + 1) * g4];
            d[u] = d_i * i * (one - i);
            d[dh + u] = d_f * f * (one - f);
            d[2 * dh + u] = d_g * (one - gg * gg);
            d[3 * dh + u] = d_o * o * (one - o);
        }
    }
    gemm(true, false, din, batch, g4, one, cache.x.data(), &dpre, one, dw_x.data_mut());
    gemm(true, false, dh, batch, g4, one, cache.h.data(), &dpre, one, dw_h.data_mut());
    let db = dbias.data_mut();
    for r in 0..batch {
        for (o, v) in db.iter_mut().zip(&dpre[r * g4..(r + 1) * g4]) {
            *o += *v;
        }
    }
    let mut dx = vec![T::zero(); batch * din];
    gemm(false, true, batch, g4, din, one, &dpre, p.w_x.data(), T::zero(), &mut dx);
    let mut dhp = vec![T::zero(); batch * dh];
    gemm(false, true, batch, g4, dh, one, &dpre, p.w_h.data(), T::zero(), &mut dhp);
    Ok(LstmInputGrads {
        dx: Tensor::new(&[batch, din], dx)?,
        dh: Tensor::new(&[batch, dh], dhp)?,
        dc: Tensor::new(&[batch, dh], dc_prev)?,
    })
}

// ---------------------------------------------------------------------------
// Activations, losses, dropout

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through ReLU given its output `y`.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(dy.shape(), data).expect("same shape")
}

/// Row-wise softmax over the last axis.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let (rows, cols) = rows_cols(logits);
    let mut out = logits.clone();
    let d = out.data_mut();
    for r in 0..rows {
        let row = &mut d[r * cols..(r + 1) * cols];
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

/// Mean cross-entropy of softmax(logits) against integer labels; returns the
/// loss and `dL/dlogits`. Rows with `weight` 0 are ignored.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize], weights: Option<&[T]>) -> Result<(T, Tensor<T>)> {
    let (rows, cols) = rows_cols(logits);
    if labels.len() != rows {
        return Err(Error::shape("softmax_cross_entropy", logits.shape(), &[labels.len()]));
    }
    let p = softmax(logits);
    let mut grad = p.clone();
    let total_w: T = match weights {
        Some(w) => w.iter().copied().sum(),
        None => T::from_f64_lossy(rows as f64),
    };
    if total_w <= T::zero() {
        return Ok((T::zero(), Tensor::zeros(logits.shape())));
    }
    let mut loss = T::zero();
    let tiny = T::from_f64_lossy(1e-30);
    for (r, &lab) in labels.iter().enumerate() {
        if lab >= cols {
            return Err(Error::InvalidArgument(format!("label {lab} out of range for {cols} classes")));
        }
        let w = weights.map_or(T::one(), |w| w[r]);
        loss -= w * (p.data()[r * cols + lab].max(tiny)).ln();
        let g = &mut grad.data_mut()[r * cols..(r + 1) * cols];
        g[lab] -= T::one();
        for v in g.iter_mut() {
            *v *= w / total_w;
        }
    }
    Ok((loss / total_w, grad))
}

/// Inverted-dropout mask: entries are 0 with probability `p`, else `1/(1-p)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(shape: &[usize], p: f64, rng: &mut R) -> Tensor<T> {
    let mut m = Tensor::zeros(shape);
    if p <= 0.0 {
        m.fill(T::one());
        return m;
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    for v in m.data_mut() {
        *v = if rng.random::<f64>() < p { T::zero() } else { keep };
    }
    m
}

/// Elementwise product of equally-shaped tensors.
pub fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape("hadamard", a.shape(), b.shape()));
    }
    let d = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
    Tensor::new(a.shape(), d)
}

/// Concatenates two `[B × a]`, `[B × b]` matrices along columns.
pub fn concat_cols<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0] {
        return Err(Error::shape("concat_cols", a.shape(), b.shape()));
    }
    let (rows, ca, cb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = Vec::with_capacity(rows * (ca + cb));
    for r in 0..rows {
        out.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        out.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    Tensor::new(&[rows, ca + cb], out)
}

/// Splits the column gradient of [`concat_cols`] back into its two parts.
pub fn split_cols<T: Scalar>(x: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (rows, cols) = (x.shape()[0], x.shape()[1]);
    if first > cols || x.rank() != 2 {
        return Err(Error::InvalidArgument("split_cols out of range".into()));
    }
    let mut a = Vec::with_capacity(rows * first);
    let mut b = Vec::with_capacity(rows * (cols - first));
    for r in 0..rows {
        a.extend_from_slice(&x.data()[r * cols..r * cols + first]);
        b.extend_from_slice(&x.data()[r * cols + first..(r + 1) * cols]);
    }
    Ok((Tensor::new(&[rows, first], a)?, Tensor::new(&[rows, cols - first], b)?))
}
