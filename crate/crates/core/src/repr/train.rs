use std::io::{Read, Write};

use rand::seq::SliceRandom;

use super::checkpoint::{read_checkpoint, write_checkpoint};
use super::model::{feature_means, standard_normal, LossParts, Normalizer, PosteriorSample, VaeConfig, VaeNet};
use crate::error::{Error, Result};
use crate::numcore::{adam_step, AdamConfig, AdamState, ParamSet, Scalar, Tensor};
use crate::seeds::{derive_seed, stream_rng};
use crate::skeleton::{to_graph_tensor, MotionFrame, SkeletonGraph, WINDOW_FRAMES};

/// A trained (or freshly initialized) VAE with its input normalizer.
#[derive(Debug, Clone)]
pub struct VaeModel<T: Scalar> {
    pub net: VaeNet<T>,
    pub params: ParamSet<T>,
    pub normalizer: Normalizer,
}

/// Per-epoch means over all windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub aux: f64,
    pub aux_accuracy: f64,
}

/// Copies rows `idx` of the leading axis.
pub fn gather<T: Scalar>(t: &Tensor<T>, idx: &[usize]) -> Tensor<T> {
    let row: usize = t.shape()[1..].iter().product();
    let mut data = Vec::with_capacity(row * idx.len());
    for &i in idx {
        data.extend_from_slice(&t.data()[i * row..(i + 1) * row]);
    }
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    Tensor::new(&shape, data).expect("gather keeps row size")
}

impl<T: Scalar> VaeModel<T> {
    pub fn new(cfg: &VaeConfig, graph: &SkeletonGraph, normalizer: Normalizer, aux_classes: Option<usize>, seed: u64) -> Result<Self> {
        if normalizer.mean.len() != graph.joint_count() * 3 {
            return Err(Error::shape("VaeModel::new(normalizer)", &[normalizer.mean.len()], &[graph.joint_count() * 3]));
        }
        let mut params = ParamSet::new();
        let net = VaeNet::new(cfg, graph, aux_classes, &mut params, derive_seed(seed, "vae.init"))?;
        // Stored at model precision so a reloaded model is bit-identical.
        let round = |v: &[f64]| v.iter().map(|&x| T::from_f64_lossy(x).to_f64_lossy()).collect();
        let normalizer = Normalizer { mean: round(&normalizer.mean), std: round(&normalizer.std) };
        Ok(Self { net, params, normalizer })
    }

    pub fn latent_dim(&self) -> usize {
        self.net.cfg.latent_dim
    }

    /// Posterior mean and log-variance of raw windows `[B, 25, J, 3]`.
    pub fn encode(&self, windows: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let x = self.normalizer.apply(windows)?;
        let (m, lv, _) = self.net.encoder_forward(&self.params, &x)?;
        Ok((m, lv))
    }

    pub fn encode_sample<R: rand::Rng + ?Sized>(&self, windows: &Tensor<T>, rng: &mut R) -> Result<PosteriorSample<T>> {
        let (mean, log_variance) = self.encode(windows)?;
        let eps = standard_normal::<T, _>(mean.shape(), rng);
        let half = T::from_f64_lossy(0.5);
        let mut sample = mean.clone();
        for ((s, &lv), &e) in sample.data_mut().iter_mut().zip(log_variance.data()).zip(eps.data()) {
            *s += (lv * half).exp() * e;
        }
        Ok(PosteriorSample { mean, log_variance, sample })
    }

    /// Raw-space reconstruction of latents `[B, L]`.
    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let (r, _) = self.net.decoder_forward(&self.params, z)?;
        self.normalizer.invert(&r)
    }

    /// Posterior means of `[N, 25, J, 3]` windows, computed in batches.
    pub fn encode_means(&self, windows: &Tensor<T>, batch: usize) -> Result<Tensor<T>> {
        let n = windows.shape()[0];
        let l = self.latent_dim();
        let mut out = Vec::with_capacity(n * l);
        let mut start = 0;
        while start < n {
            let end = (start + batch.max(1)).min(n);
            let (m, _) = self.encode(&windows.slice_rows(start, end))?;
            out.extend_from_slice(m.data());
            start = end;
        }
        Tensor::new(&[n, l], out)
    }

    /// Per-element squared error of mean reconstructions in normalized
    /// space, and the per-element variance of the normalized data around
    /// each joint-coordinate's own mean.
    pub fn reconstruction_error(&self, windows: &Tensor<T>) -> Result<(f64, f64)> {
        let x = self.normalizer.apply(windows)?;
        let (m, _, _) = self.net.encoder_forward(&self.params, &x)?;
        let (r, _) = self.net.decoder_forward(&self.params, &m)?;
        let n = x.len() as f64;
        let mse = x.data().iter().zip(r.data()).map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2)).sum::<f64>() / n;
        let f = self.normalizer.mean.len();
        let means = feature_means(&x, f);
        let var = x
            .data()
            .chunks(f)
            .flat_map(|row| row.iter().zip(&means).map(|(v, m)| (v.to_f64_lossy() - m).powi(2)))
            .sum::<f64>()
            / n;
        Ok((mse, var))
    }

    /// Auxiliary classifier predictions for raw windows; `None` without an
    /// auxiliary head.
    pub fn aux_predict(&self, windows: &Tensor<T>) -> Result<Option<Vec<usize>>> {
        let (m, _) = self.encode(windows)?;
        self.net.aux_predict(&self.params, &m)
    }

    fn echo(&self) -> String {
        let aux = if self.net.has_aux() { "vae.aux = true\n" } else { "vae.aux = false\n" };
        format!("{}{aux}", self.net.cfg.echo(self.net.joints))
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let mean = Tensor::<T>::from_f64(&[self.normalizer.mean.len()], &self.normalizer.mean)?;
        let std = Tensor::<T>::from_f64(&[self.normalizer.std.len()], &self.normalizer.std)?;
        let mut tensors: Vec<(&str, &Tensor<T>)> = self.params.named_values().collect();
        tensors.push(("norm.mean", &mean));
        tensors.push(("norm.std", &std));
        write_checkpoint(w, &self.echo(), &tensors)
    }

    /// Loads a checkpoint written for exactly this config and skeleton.
    pub fn load<R: Read>(r: R, cfg: &VaeConfig, graph: &SkeletonGraph, aux_classes: Option<usize>) -> Result<Self> {
        let mut model = Self::new(cfg, graph, Normalizer::identity(graph.joint_count() * 3), aux_classes, 0)?;
        let ck = read_checkpoint(r, Some(&model.echo()))?;
        ck.load_into(&mut model.params)?;
        model.normalizer = Normalizer {
            mean: ck.tensor::<T>("norm.mean")?.to_f64_vec(),
            std: ck.tensor::<T>("norm.std")?.to_f64_vec(),
        };
        Ok(model)
    }
}

/// Trains the VAE with minibatch Adam; returns the model and per-epoch trace.
pub fn train_vae<T: Scalar>(windows: &Tensor<T>, cfg: &VaeConfig, graph: &SkeletonGraph, seed: u64) -> Result<(VaeModel<T>, Vec<EpochStats>)> {
    train_impl(windows, None, cfg, graph, seed)
}

/// As [`train_vae`], plus `lambda ·` cross-entropy of a linear classifier on
/// the posterior mean predicting `labels` (`classes` categories).
pub fn train_vae_with_aux<T: Scalar>(
    windows: &Tensor<T>,
    labels: &[usize],
    classes: usize,
    cfg: &VaeConfig,
    graph: &SkeletonGraph,
    lambda: f64,
    seed: u64,
) -> Result<(VaeModel<T>, Vec<EpochStats>)> {
    if labels.len() != windows.shape().first().copied().unwrap_or(0) {
        return Err(Error::InvalidArgument(format!("{} labels for {} windows", labels.len(), windows.shape()[0])));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{classes}")));
    }
    train_impl(windows, Some((labels, classes, lambda)), cfg, graph, seed)
}

fn train_impl<T: Scalar>(
    windows: &Tensor<T>,
    aux: Option<(&[usize], usize, f64)>,
    cfg: &VaeConfig,
    graph: &SkeletonGraph,
    seed: u64,
) -> Result<(VaeModel<T>, Vec<EpochStats>)> {
    if windows.rank() != 4 || windows.is_empty() {
        return Err(Error::EmptyDataset("no windows to train the VAE on".into()));
    }
    let n = windows.shape()[0];
    let normalizer = Normalizer::fit(windows)?;
    let mut model = VaeModel::new(cfg, graph, normalizer, aux.map(|a| a.1), seed)?;
    let x_all = model.normalizer.apply(windows)?;
    // Start the decoder at the mean pose so early steps fit motion, not layout.
    let means = feature_means(&x_all, model.normalizer.mean.len());
    model.net.set_output_bias(&mut model.params, &means)?;
    let mut adam = AdamState::new(&model.params, AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() });
    let mut rng = stream_rng(seed, "vae.train");
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossParts::default();
        for idx in order.chunks(cfg.batch_size) {
            let xb = gather(&x_all, idx);
            let eps = standard_normal::<T, _>(&[idx.len(), cfg.latent_dim], &mut rng);
            let labels: Option<Vec<usize>> = aux.map(|(l, _, _)| idx.iter().map(|&i| l[i]).collect());
            model.params.zero_grads();
            let parts = model.net.loss_and_grad(
                &mut model.params,
                &xb,
                &eps,
                cfg.beta,
                labels.as_deref().zip(aux.map(|a| a.2)),
            )?;
            if !parts.total.is_finite() {
                return Err(Error::NonFinite(format!("VAE loss at epoch {epoch}")));
            }
            adam_step(&mut model.params, &mut adam);
            let w = idx.len() as f64;
            sum.total += parts.total * w;
            sum.recon += parts.recon * w;
            sum.kl += parts.kl * w;
            sum.aux += parts.aux * w;
            sum.aux_correct += parts.aux_correct;
        }
        let nf = n as f64;
        let stats = EpochStats {
            epoch,
            total: sum.total / nf,
            recon: sum.recon / nf,
            kl: sum.kl / nf,
            aux: sum.aux / nf,
            aux_accuracy: sum.aux_correct as f64 / nf,
        };
        log::info!(
            "vae epoch {epoch}: total {:.4} recon {:.4} kl {:.4} aux {:.4}",
            stats.total,
            stats.recon,
            stats.kl,
            stats.aux
        );
        trace.push(stats);
    }
    Ok((model, trace))
}

/// Stacks 25-frame windows into `[N, 25, J, 3]`.
pub fn stack_windows<T: Scalar>(windows: &[&[MotionFrame]], graph: &SkeletonGraph) -> Result<Tensor<T>> {
    if windows.is_empty() {
        return Err(Error::EmptyDataset("no windows to stack".into()));
    }
    let j = graph.joint_count();
    let mut data = Vec::with_capacity(windows.len() * WINDOW_FRAMES * j * 3);
    for w in windows {
        data.extend_from_slice(to_graph_tensor::<T>(w, graph)?.data());
    }
    Tensor::new(&[windows.len(), WINDOW_FRAMES, j, 3], data)
}
