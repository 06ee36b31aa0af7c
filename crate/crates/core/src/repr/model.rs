use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numcore::ops::{relu, relu_backward, softmax_cross_entropy};
use super::trunk::{GcnTrunk, TrunkCache};
use crate::numcore::{Dense, ParamSet, Scalar, TemporalConvTranspose, Tensor};
use crate::skeleton::{SkeletonGraph, WINDOW_FRAMES};

/// Log-variance outputs are clamped to this symmetric range.
pub const LOG_VAR_CLAMP: f64 = 10.0;

/// Default weight of the auxiliary cross-entropy. The reconstruction term
/// sums over every joint-coordinate of a window, so the per-window
/// cross-entropy needs a weight of this order to shape the latent.
pub const DEFAULT_AUX_WEIGHT: f64 = 100.0;
/// Temporal length at the decoder input.
const DECODER_T0: usize = 5;
const DECODER_KERNELS: [usize; 2] = [3, 5];
const DECODER_STRIDE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub beta: f64,
    /// Output channels of the four graph-conv blocks.
    pub channels: [usize; 4],
    /// Temporal stride of each block.
    pub strides: [usize; 4],
    /// Temporal kernel size of each block.
    pub kernel: usize,
    /// Channel width of the decoder trunk.
    pub decoder_channels: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            beta: 1.0,
            channels: [16, 32, 32, 64],
            strides: [1, 2, 1, 2],
            kernel: 3,
            decoder_channels: 64,
            epochs: 5,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("vae.{m}")));
        if self.latent_dim == 0 {
            return bad("latent_dim must be >= 1");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and >= 0");
        }
        if self.channels.contains(&0) || self.strides.contains(&0) || self.decoder_channels == 0 {
            return bad("channels, strides and decoder_channels must be positive");
        }
        if self.kernel % 2 == 0 {
            return bad("kernel must be odd");
        }
        let mut t = WINDOW_FRAMES;
        for &s in &self.strides {
            t = crate::numcore::ops::conv_out_len(t, self.kernel, s)
                .ok_or_else(|| Error::Config("vae.strides/kernel shrink the window below one frame".into()))?;
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return bad("batch_size and learning_rate must be positive");
        }
        Ok(())
    }

    /// Canonical text used as the checkpoint config echo.
    pub fn echo(&self, joints: usize) -> String {
        format!(
            "vae.latent_dim = {}\nvae.beta = {}\nvae.channels = {:?}\nvae.strides = {:?}\nvae.kernel = {}\nvae.decoder_channels = {}\nskeleton.joints = {}\n",
            self.latent_dim, self.beta, self.channels, self.strides, self.kernel, self.decoder_channels, joints
        )
    }
}

/// Per-axis centering with one shared scale, fitted on training windows.
/// Centering each joint separately would map the two mirror-image wrist
/// cues onto each other; the shared scale is the RMS deviation of joint
/// coordinates from their own means, so it measures motion and not body size.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    /// Per joint-coordinate offsets (equal for the same axis).
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Scales below this (meters) are floored.
const STD_FLOOR: f64 = 1e-3;

impl Normalizer {
    pub fn identity(features: usize) -> Self {
        Self { mean: vec![0.0; features], std: vec![1.0; features] }
    }

    /// Fits on a `[N, T, J, 3]` dataset.
    pub fn fit<T: Scalar>(data: &Tensor<T>) -> Result<Self> {
        let f = feature_count(data)?;
        let rows = data.len() / f;
        let feature_mean = feature_means(data, f);
        let mut axis = [0.0; 3];
        for (k, m) in feature_mean.iter().enumerate() {
            axis[k % 3] += m / (f / 3) as f64;
        }
        let mut var = 0.0;
        for row in data.data().chunks(f) {
            for (v, m) in row.iter().zip(&feature_mean) {
                var += (v.to_f64_lossy() - m).powi(2);
            }
        }
        let scale = (var / (rows * f) as f64).sqrt().max(STD_FLOOR);
        Ok(Self { mean: (0..f).map(|k| axis[k % 3]).collect(), std: vec![scale; f] })
    }

    pub fn apply<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.map(x, |v, m, s| (v - m) / s)
    }

    pub fn invert<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.map(x, |v, m, s| v * s + m)
    }

    fn map<T: Scalar>(&self, x: &Tensor<T>, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor<T>> {
        let n = self.mean.len();
        if feature_count(x)? != n {
            return Err(Error::shape("normalizer", x.shape(), &[n]));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(n) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = T::from_f64_lossy(f(v.to_f64_lossy(), m, s));
            }
        }
        Ok(out)
    }
}

/// Mean of each joint-coordinate over all frames of `[N, T, J, 3]` data.
pub(crate) fn feature_means<T: Scalar>(data: &Tensor<T>, f: usize) -> Vec<f64> {
    let rows = data.len() / f;
    let mut mean = vec![0.0; f];
    for row in data.data().chunks(f) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v.to_f64_lossy();
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    mean
}

fn feature_count<T: Scalar>(x: &Tensor<T>) -> Result<usize> {
    let s = x.shape();
    if s.len() != 4 || s[3] != 3 {
        return Err(Error::InvalidArgument(format!("expected [N, T, J, 3] windows, got {s:?}")));
    }
    Ok(s[2] * 3)
}

/// Encoder posterior for a batch: `[B, L]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample<T> {
    pub mean: Tensor<T>,
    pub log_variance: Tensor<T>,
    pub sample: Tensor<T>,
}

/// Parameter handles of the encoder/decoder; values live in a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct VaeNet<T> {
    pub cfg: VaeConfig,
    pub joints: usize,
    trunk: GcnTrunk<T>,
    head: Dense,
    dec_in: Dense,
    dec_up: [TemporalConvTranspose; 2],
    dec_out: Dense,
    aux: Option<Dense>,
}

pub(crate) struct EncoderCache<T> {
    trunk: TrunkCache<T>,
    pooled: Tensor<T>,
    raw_log_var: Tensor<T>,
}

pub(crate) struct DecoderCache<T> {
    z: Tensor<T>,
    d0: Tensor<T>,
    u: [Tensor<T>; 2],
}

/// Loss components of one batch, averaged over windows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub aux: f64,
    /// Auxiliary head predictions that matched the label.
    pub aux_correct: usize,
}

impl<T: Scalar> VaeNet<T> {
    /// Registers all parameters in `ps`. The auxiliary head, when present,
    /// draws from its own RNG stream so the VAE initialization is unchanged.
    pub fn new(cfg: &VaeConfig, graph: &SkeletonGraph, with_aux: Option<usize>, ps: &mut ParamSet<T>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = GcnTrunk::new(ps, "enc", graph, &cfg.channels, &cfg.strides, cfg.kernel, &mut rng);
        let head = Dense::new(ps, "enc.head", trunk.out_channels(), 2 * cfg.latent_dim, &mut rng);
        let cd = cfg.decoder_channels;
        let dec_in = Dense::new(ps, "dec.in", cfg.latent_dim, DECODER_T0 * cd, &mut rng);
        let dec_up = [
            TemporalConvTranspose::new(ps, "dec.up0", DECODER_KERNELS[0], cd, cd, DECODER_STRIDE, &mut rng),
            TemporalConvTranspose::new(ps, "dec.up1", DECODER_KERNELS[1], cd, cd, DECODER_STRIDE, &mut rng),
        ];
        let dec_out = Dense::new(ps, "dec.out", cd, graph.joint_count() * 3, &mut rng);
        let aux = with_aux.map(|classes| {
            let mut aux_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11C_1A55_0000_0001);
            Dense::new(ps, "aux.head", cfg.latent_dim, classes, &mut aux_rng)
        });
        Ok(Self {
            cfg: cfg.clone(),
            joints: graph.joint_count(),
            trunk,
            head,
            dec_in,
            dec_up,
            dec_out,
            aux,
        })
    }

    pub fn has_aux(&self) -> bool {
        self.aux.is_some()
    }

    /// Sets the decoder output bias, one value per joint-coordinate.
    pub(crate) fn set_output_bias(&self, ps: &mut ParamSet<T>, values: &[f64]) -> Result<()> {
        let b = ps.value_mut(self.dec_out.b);
        if b.len() != values.len() {
            return Err(Error::shape("set_output_bias", b.shape(), &[values.len()]));
        }
        for (o, &v) in b.data_mut().iter_mut().zip(values) {
            *o = T::from_f64_lossy(v);
        }
        Ok(())
    }

    /// Auxiliary-head class predictions for posterior means `[B, L]`.
    pub fn aux_predict(&self, ps: &ParamSet<T>, mean: &Tensor<T>) -> Result<Option<Vec<usize>>> {
        let Some(head) = self.aux else { return Ok(None) };
        let logits = head.forward(ps, mean)?;
        Ok(Some(logits.data().chunks(logits.shape()[1]).map(argmax).collect()))
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != WINDOW_FRAMES || s[2] != self.joints || s[3] != 3 {
            return Err(Error::shape("encode", s, &[0, WINDOW_FRAMES, self.joints, 3]));
        }
        Ok(())
    }

    /// Posterior mean and clamped log-variance of normalized windows.
    pub(crate) fn encoder_forward(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, EncoderCache<T>)> {
        self.check_input(x)?;
        let (pooled, trunk) = self.trunk.forward(ps, x)?;
        let out = self.head.forward(ps, &pooled)?;
        let (mean, raw_log_var) = crate::numcore::ops::split_cols(&out, self.cfg.latent_dim)?;
        let lim = T::from_f64_lossy(LOG_VAR_CLAMP);
        let log_var = raw_log_var.map(|v| v.max(-lim).min(lim));
        Ok((mean, log_var, EncoderCache { trunk, pooled, raw_log_var }))
    }

    /// Accumulates encoder gradients from `d_mean` and `d_log_var`.
    pub(crate) fn encoder_backward(&self, ps: &mut ParamSet<T>, cache: &EncoderCache<T>, d_mean: &Tensor<T>, d_log_var: &Tensor<T>) -> Result<()> {
        let lim = T::from_f64_lossy(LOG_VAR_CLAMP);
        let mut dlv = d_log_var.clone();
        for (d, &r) in dlv.data_mut().iter_mut().zip(cache.raw_log_var.data()) {
            if r < -lim || r > lim {
                *d = T::zero();
            }
        }
        let d_out = crate::numcore::ops::concat_cols(d_mean, &dlv)?;
        let d_pooled = self.head.backward(ps, &cache.pooled, &d_out)?;
        self.trunk.backward(ps, &cache.trunk, &d_pooled)?;
        Ok(())
    }

    /// Reconstructs normalized windows `[B, 25, J, 3]` from latents `[B, L]`.
    pub(crate) fn decoder_forward(&self, ps: &ParamSet<T>, z: &Tensor<T>) -> Result<(Tensor<T>, DecoderCache<T>)> {
        if z.rank() != 2 || z.shape()[1] != self.cfg.latent_dim {
            return Err(Error::shape("decode", z.shape(), &[0, self.cfg.latent_dim]));
        }
        let b = z.shape()[0];
        let cd = self.cfg.decoder_channels;
        let d0 = relu(&self.dec_in.forward(ps, z)?).reshape(&[b, DECODER_T0, 1, cd])?;
        let u0 = relu(&self.dec_up[0].forward(ps, &d0)?);
        let u1 = relu(&self.dec_up[1].forward(ps, &u0)?);
        let out = self.dec_out.forward(ps, &u1)?;
        let t = out.shape()[1];
        debug_assert_eq!(t, WINDOW_FRAMES);
        let recon = out.reshape(&[b, t, self.joints, 3])?;
        Ok((recon, DecoderCache { z: z.clone(), d0, u: [u0, u1] }))
    }

    /// Accumulates decoder gradients; returns `dL/dz`.
    pub(crate) fn decoder_backward(&self, ps: &mut ParamSet<T>, cache: &DecoderCache<T>, d_recon: &Tensor<T>) -> Result<Tensor<T>> {
        let b = cache.z.shape()[0];
        let d_out = d_recon.clone().reshape(&[b, WINDOW_FRAMES, 1, self.joints * 3])?;
        let du1 = self.dec_out.backward(ps, &cache.u[1], &d_out)?;
        let du0 = self.dec_up[1].backward(ps, &cache.u[0], &relu_backward(&cache.u[1], &du1))?;
        let dd0 = self.dec_up[0].backward(ps, &cache.d0, &relu_backward(&cache.u[0], &du0))?;
        let dd0 = relu_backward(&cache.d0, &dd0).reshape(&[b, DECODER_T0 * self.cfg.decoder_channels])?;
        self.dec_in.backward(ps, &cache.z, &dd0)
    }

    /// Hash of every ReLU on/off state and log-variance clamp state reached
    /// when evaluating the loss at `x`, `eps`; constant on each smooth piece.
    pub fn piece_fingerprint(&self, ps: &ParamSet<T>, x: &Tensor<T>, eps: &Tensor<T>) -> Result<u64> {
        use std::hash::{Hash, Hasher};
        let (mean, log_var, enc) = self.encoder_forward(ps, x)?;
        let half = T::from_f64_lossy(0.5);
        let mut z = mean;
        for ((zv, &lv), &e) in z.data_mut().iter_mut().zip(log_var.data()).zip(eps.data()) {
            *zv += (lv * half).exp() * e;
        }
        let (_, dec) = self.decoder_forward(ps, &z)?;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let mut mask = |t: &Tensor<T>| {
            for v in t.data() {
                (*v > T::zero()).hash(&mut h);
            }
        };
        mask(&dec.d0);
        mask(&dec.u[0]);
        mask(&dec.u[1]);
        GcnTrunk::hash_masks(&enc.trunk, &mut h);
        let lim = T::from_f64_lossy(LOG_VAR_CLAMP);
        for v in enc.raw_log_var.data() {
            (v.abs() > lim).hash(&mut h);
        }
        Ok(h.finish())
    }

    /// Full training objective on normalized windows with fixed reparameterization
    /// noise `eps` (`[B, L]`). Accumulates gradients into `ps`.
    pub fn loss_and_grad(
        &self,
        ps: &mut ParamSet<T>,
        x: &Tensor<T>,
        eps: &Tensor<T>,
        beta: f64,
        aux: Option<(&[usize], f64)>,
    ) -> Result<LossParts> {
        let (mean, log_var, enc) = self.encoder_forward(ps, x)?;
        if eps.shape() != mean.shape() {
            return Err(Error::shape("loss_and_grad(eps)", eps.shape(), mean.shape()));
        }
        let b = mean.shape()[0];
        let half = T::from_f64_lossy(0.5);
        let sigma = log_var.map(|v| (v * half).exp());
        let mut z = mean.clone();
        for ((zv, &s), &e) in z.data_mut().iter_mut().zip(sigma.data()).zip(eps.data()) {
            *zv += s * e;
        }
        let (recon, dec) = self.decoder_forward(ps, &z)?;
        let parts = vae_loss(x, &mean, &log_var, &recon, beta)?;

        let inv_b = T::from_f64_lossy(1.0 / b as f64);
        let mut d_recon = recon.clone();
        for (d, &t) in d_recon.data_mut().iter_mut().zip(x.data()) {
            *d = (*d - t) * inv_b;
        }
        let dz = self.decoder_backward(ps, &dec, &d_recon)?;
        let beta_t = T::from_f64_lossy(beta);
        let mut d_mean = dz.clone();
        for (d, &m) in d_mean.data_mut().iter_mut().zip(mean.data()) {
            *d += beta_t * m * inv_b;
        }
        let mut d_lv = dz;
        for (((d, &s), &e), &lv) in d_lv.data_mut().iter_mut().zip(sigma.data()).zip(eps.data()).zip(log_var.data()) {
            *d = *d * s * e * half + beta_t * half * (lv.exp() - T::one()) * inv_b;
        }

        let mut out = LossParts { total: parts.0, recon: parts.1, kl: parts.2, ..LossParts::default() };
        if let (Some((labels, lambda)), Some(head)) = (aux, self.aux) {
            if labels.len() != b {
                return Err(Error::InvalidArgument(format!("{} labels for {b} windows", labels.len())));
            }
            let logits = head.forward(ps, &mean)?;
            let (ce, mut dlogits) = softmax_cross_entropy(&logits, labels, None)?;
            out.aux = ce.to_f64_lossy();
            out.total += lambda * out.aux;
            out.aux_correct = logits
                .data()
                .chunks(logits.shape()[1])
                .zip(labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            dlogits.scale(T::from_f64_lossy(lambda));
            let dm = head.backward(ps, &mean, &dlogits)?;
            d_mean.add_assign(&dm)?;
        }
        self.encoder_backward(ps, &enc, &d_mean, &d_lv)?;
        Ok(out)
    }
}

/// Batch-mean objective `(total, recon, kl)`: `recon` is the unit-variance
/// Gaussian negative log-likelihood `½‖x̂ − x‖²` per window (constant
/// dropped), `kl` the closed-form KL to `N(0, I)`, `total = recon + β·kl`.
pub fn vae_loss<T: Scalar>(x: &Tensor<T>, mean: &Tensor<T>, log_var: &Tensor<T>, recon: &Tensor<T>, beta: f64) -> Result<(f64, f64, f64)> {
    if x.shape() != recon.shape() {
        return Err(Error::shape("vae_loss(recon)", x.shape(), recon.shape()));
    }
    if mean.shape() != log_var.shape() || mean.rank() != 2 || mean.shape()[0] != x.shape()[0] {
        return Err(Error::shape("vae_loss(posterior)", mean.shape(), log_var.shape()));
    }
    let b = x.shape()[0] as f64;
    let sq: f64 = x.data().iter().zip(recon.data()).map(|(a, r)| (r.to_f64_lossy() - a.to_f64_lossy()).powi(2)).sum();
    let recon_term = 0.5 * sq / b;
    let kl: f64 = mean
        .data()
        .iter()
        .zip(log_var.data())
        .map(|(m, lv)| {
            let (m, lv) = (m.to_f64_lossy(), lv.to_f64_lossy());
            0.5 * (m * m + lv.exp() - 1.0 - lv)
        })
        .sum::<f64>()
        / b;
    Ok((recon_term + beta * kl, recon_term, kl))
}

/// Standard-normal tensor for the reparameterization trick.
pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let e: f64 = StandardNormal.sample(rng);
        *v = T::from_f64_lossy(e);
    }
    t
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
