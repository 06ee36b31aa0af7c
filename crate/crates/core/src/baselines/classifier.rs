use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::btree::BTContext;
use crate::error::{Error, Result};
use crate::numcore::ops::{concat_cols, dropout_mask, hadamard, relu, relu_backward, softmax, softmax_cross_entropy, split_cols};
use crate::numcore::{adam_step, AdamConfig, AdamState, Dense, Lstm, ParamSet, Scalar, Tensor};
use crate::repr::{stack_windows, GcnTrunk, Normalizer};
use crate::seeds::{derive_seed, stream_rng};
use crate::simulator::{window_action_label, PhaseScript, RobotAction, Session};
use crate::skeleton::{SkeletonGraph, WINDOW_FRAMES};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub channels: [usize; 4],
    pub strides: [usize; 4],
    pub kernel: usize,
    /// Width of the per-window feature fed to the LSTM.
    pub feature_dim: usize,
    pub hidden: usize,
    /// Drop probability on the input of the output layer.
    pub dropout: f64,
    pub epochs: usize,
    /// Episodes per minibatch.
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            channels: [16, 32, 32, 64],
            strides: [1, 2, 1, 2],
            kernel: 3,
            feature_dim: 16,
            hidden: 64,
            dropout: 0.5,
            epochs: 5,
            batch_size: 8,
            learning_rate: 1e-3,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("baselines.{m}")));
        if self.channels.contains(&0) || self.strides.contains(&0) || self.kernel % 2 == 0 {
            return bad("channels and strides must be positive and the kernel odd");
        }
        let mut t = WINDOW_FRAMES;
        for &s in &self.strides {
            t = crate::numcore::ops::conv_out_len(t, self.kernel, s)
                .ok_or_else(|| Error::Config("baselines.strides/kernel shrink the window below one frame".into()))?;
        }
        if self.feature_dim == 0 || self.hidden == 0 || self.batch_size == 0 {
            return bad("feature_dim, hidden and batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// One phase as a supervised sequence: raw windows `[n, 25, J, 3]`, the
/// phase context and the per-window action label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEpisode<T: Scalar> {
    pub script: PhaseScript,
    pub windows: Tensor<T>,
    pub context: BTContext,
    /// Wait until the window ends after the cue onset, then the correct
    /// action; indices into [`RobotAction::ALL`].
    pub labels: Vec<usize>,
}

impl<T: Scalar> LabeledEpisode<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn labeled_episodes<T: Scalar>(sessions: &[Session], graph: &SkeletonGraph) -> Result<Vec<LabeledEpisode<T>>> {
    let mut out = Vec::new();
    for s in sessions {
        for (p, script) in s.script.phases.iter().enumerate() {
            let n = script.window_count();
            let windows: Vec<_> = (1..=n).map(|i| s.window(p, i)).collect();
            out.push(LabeledEpisode {
                script: script.clone(),
                windows: stack_windows(&windows, graph)?,
                context: BTContext::for_phase(script),
                labels: (1..=n).map(|i| window_action_label(script, i).index()).collect(),
            });
        }
    }
    Ok(out)
}

/// Window trunk, per-window feature layer, LSTM over `feature ‖ context`,
/// a ReLU dense layer and a softmax output layer whose input is dropped out.
#[derive(Debug, Clone)]
pub struct Classifier<T: Scalar> {
    pub cfg: ClassifierConfig,
    pub normalizer: Normalizer,
    pub params: ParamSet<T>,
    trunk: GcnTrunk<T>,
    feat: Dense,
    lstm: Lstm,
    fc1: Dense,
    fc2: Dense,
}

/// Deterministic part of a forward pass over one episode: the output-layer
/// input at every step, before dropout.
pub struct HiddenTrace<T> {
    pub a1: Tensor<T>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new(cfg: &ClassifierConfig, graph: &SkeletonGraph, normalizer: Normalizer, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "classifier.init"));
        let trunk = GcnTrunk::new(&mut ps, "cls", graph, &cfg.channels, &cfg.strides, cfg.kernel, &mut rng);
        let feat = Dense::new(&mut ps, "cls.feat", trunk.out_channels(), cfg.feature_dim, &mut rng);
        let lstm = Lstm::new(&mut ps, "cls.lstm", cfg.feature_dim + BTContext::DIM, cfg.hidden, &mut rng);
        let fc1 = Dense::new(&mut ps, "cls.fc1", cfg.hidden, cfg.hidden, &mut rng);
        let fc2 = Dense::new(&mut ps, "cls.fc2", cfg.hidden, RobotAction::COUNT, &mut rng);
        Ok(Self { cfg: cfg.clone(), normalizer, params: ps, trunk, feat, lstm, fc1, fc2 })
    }

    /// Runs the deterministic layers over raw windows `[n, 25, J, 3]`.
    pub fn hidden_trace(&self, windows: &Tensor<T>, context: &BTContext) -> Result<HiddenTrace<T>> {
        let ps = &self.params;
        let x = self.normalizer.apply(windows)?;
        let (pooled, _) = self.trunk.forward(ps, &x)?;
        let f = self.feat.forward(ps, &pooled)?;
        let n = f.shape()[0];
        let ctx = Tensor::from_f64(&[1, BTContext::DIM], context.as_slice())?;
        let (mut h, mut c) = self.lstm.zero_state::<T>(1);
        let mut hs = Vec::with_capacity(n * self.cfg.hidden);
        for t in 0..n {
            let xt = concat_cols(&f.slice_rows(t, t + 1), &ctx)?;
            let (nh, nc, _) = self.lstm.step(ps, &xt, &h, &c)?;
            hs.extend_from_slice(nh.data());
            h = nh;
            c = nc;
        }
        let hs = Tensor::new(&[n, self.cfg.hidden], hs)?;
        Ok(HiddenTrace { a1: relu(&self.fc1.forward(ps, &hs)?) })
    }

    /// Class probabilities `[n, 6]` from a trace, with a fresh dropout mask
    /// when `rng` is given and none otherwise.
    pub fn probabilities<R: Rng + ?Sized>(&self, trace: &HiddenTrace<T>, rng: Option<&mut R>) -> Result<Tensor<T>> {
        let input = match rng {
            Some(r) => hadamard(&trace.a1, &dropout_mask(trace.a1.shape(), self.cfg.dropout, r))?,
            None => trace.a1.clone(),
        };
        Ok(softmax(&self.fc2.forward(&self.params, &input)?))
    }

    /// Mean cross-entropy over every step of `batch` (normalized windows)
    /// with dropout drawn from `rng`; gradients accumulate into the params.
    fn loss_and_grad<R: Rng + ?Sized>(
        &mut self,
        batch: &[&NormEpisode<T>],
        rng: &mut R,
        mut pieces: Option<&mut std::collections::hash_map::DefaultHasher>,
    ) -> Result<f64> {
        let mut order: Vec<&NormEpisode<T>> = batch.to_vec();
        order.sort_by_key(|e| std::cmp::Reverse(e.labels.len()));
        let lens: Vec<usize> = order.iter().map(|e| e.labels.len()).collect();
        let total: usize = lens.iter().sum();
        let mut offsets = Vec::with_capacity(order.len());
        let mut acc = 0;
        for &l in &lens {
            offsets.push(acc);
            acc += l;
        }
        let x = Tensor::stack(&order.iter().flat_map(|e| e.windows.iter()).collect::<Vec<_>>())?;
        let ps = &self.params;
        let (pooled, tcache) = self.trunk.forward(ps, &x)?;
        if let Some(h) = pieces.as_deref_mut() {
            GcnTrunk::hash_masks(&tcache, h);
        }
        let f = self.feat.forward(ps, &pooled)?;
        let fd = self.cfg.feature_dim;
        let hd = self.cfg.hidden;
        let active = |t: usize| lens.partition_point(|&l| l > t);
        let steps = lens[0];

        struct StepCache<T> {
            lstm: crate::numcore::LstmCache<T>,
            h: Tensor<T>,
            a1: Tensor<T>,
            mask: Tensor<T>,
            a1d: Tensor<T>,
            dlogits: Tensor<T>,
        }
        let mut caches = Vec::with_capacity(steps);
        let (mut h, mut c) = self.lstm.zero_state::<T>(order.len());
        let mut loss = 0.0;
        for t in 0..steps {
            let n = active(t);
            let mut xt = Vec::with_capacity(n * (fd + BTContext::DIM));
            let mut labels = Vec::with_capacity(n);
            for (k, e) in order[..n].iter().enumerate() {
                let row = offsets[k] + t;
                xt.extend_from_slice(&f.data()[row * fd..(row + 1) * fd]);
                xt.extend(e.context.as_slice().iter().map(|&v| T::from_f64_lossy(v)));
                labels.push(e.labels[t]);
            }
            let xt = Tensor::new(&[n, fd + BTContext::DIM], xt)?;
            let (hp, cp) = if n == h.shape()[0] { (h, c) } else { (h.slice_rows(0, n), c.slice_rows(0, n)) };
            let (nh, nc, lc) = self.lstm.step(ps, &xt, &hp, &cp)?;
            let a1 = relu(&self.fc1.forward(ps, &nh)?);
            if let Some(h) = pieces.as_deref_mut() {
                use std::hash::Hash;
                a1.data().iter().for_each(|v| (*v > T::zero()).hash(h));
            }
            let mask = dropout_mask(a1.shape(), self.cfg.dropout, rng);
            let a1d = hadamard(&a1, &mask)?;
            let logits = self.fc2.forward(ps, &a1d)?;
            let (ce, mut dlogits) = softmax_cross_entropy(&logits, &labels, None)?;
            loss += ce.to_f64_lossy() * n as f64;
            dlogits.scale(T::from_f64_lossy(n as f64 / total as f64));
            caches.push(StepCache { lstm: lc, h: nh.clone(), a1, mask, a1d, dlogits });
            h = nh;
            c = nc;
        }
        let loss = loss / total as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("classifier loss".into()));
        }

        let ps = &mut self.params;
        let mut df = Tensor::<T>::zeros(f.shape());
        let mut carry: Option<(Tensor<T>, Tensor<T>)> = None;
        for t in (0..steps).rev() {
            let n = active(t);
            let sc = &caches[t];
            let da1d = self.fc2.backward(ps, &sc.a1d, &sc.dlogits)?;
            let da1 = hadamard(&da1d, &sc.mask)?;
            let mut dh = self.fc1.backward(ps, &sc.h, &relu_backward(&sc.a1, &da1))?;
            let mut dc = Tensor::zeros(&[n, hd]);
            if let Some((ch, cc)) = carry.take() {
                let m = ch.len();
                for (o, g) in dh.data_mut()[..m].iter_mut().zip(ch.data()) {
                    *o += *g;
                }
                dc.data_mut()[..m].copy_from_slice(cc.data());
            }
            let g = self.lstm.step_backward(ps, &sc.lstm, &dh, &dc)?;
            let (dfx, _) = split_cols(&g.dx, fd)?;
            for k in 0..n {
                let row = offsets[k] + t;
                df.data_mut()[row * fd..(row + 1) * fd].copy_from_slice(&dfx.data()[k * fd..(k + 1) * fd]);
            }
            carry = Some((g.dh, g.dc));
        }
        let dpooled = self.feat.backward(ps, &pooled, &df)?;
        self.trunk.backward(ps, &tcache, &dpooled)?;
        Ok(loss)
    }
}

/// Training episode with pre-normalized windows, one tensor per window.
struct NormEpisode<T> {
    windows: Vec<Tensor<T>>,
    context: BTContext,
    labels: Vec<usize>,
}

impl<T: Scalar> NormEpisode<T> {
    fn new(norm: &Normalizer, e: &LabeledEpisode<T>) -> Result<Self> {
        let x = norm.apply(&e.windows)?;
        let n = x.shape()[0];
        Ok(Self {
            windows: (0..n).map(|i| x.slice_rows(i, i + 1).reshape(&x.shape()[1..]).expect("row")).collect(),
            context: e.context,
            labels: e.labels.clone(),
        })
    }
}

fn validate_episodes<T: Scalar>(episodes: &[LabeledEpisode<T>]) -> Result<()> {
    if episodes.is_empty() {
        return Err(Error::EmptyDataset("classifier training needs at least one episode".into()));
    }
    for e in episodes {
        if e.windows.rank() != 4 || e.windows.shape()[0] != e.labels.len() {
            return Err(Error::InvalidArgument(format!(
                "episode has {} labels for windows of shape {:?}",
                e.labels.len(),
                e.windows.shape()
            )));
        }
        if e.labels.iter().any(|&l| l >= RobotAction::COUNT) {
            return Err(Error::InvalidArgument("action label out of range".into()));
        }
    }
    Ok(())
}

/// Trains one classifier on `episodes` with cross-entropy at every step.
pub fn train_classifier<T: Scalar>(
    episodes: &[LabeledEpisode<T>],
    cfg: &ClassifierConfig,
    graph: &SkeletonGraph,
    seed: u64,
) -> Result<Classifier<T>> {
    validate_episodes(episodes)?;
    let all: Vec<&Tensor<T>> = episodes.iter().map(|e| &e.windows).collect();
    let joined = concat_rows(&all)?;
    let normalizer = Normalizer::fit(&joined)?;
    let mut model = Classifier::new(cfg, graph, normalizer, seed)?;
    let data: Vec<NormEpisode<T>> = episodes
        .iter()
        .map(|e| NormEpisode::new(&model.normalizer, e))
        .collect::<Result<_>>()?;
    let mut adam = AdamState::new(&model.params, AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() });
    let mut rng = stream_rng(seed, "classifier.train");
    let mut idx: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in idx.chunks(cfg.batch_size) {
            let batch: Vec<&NormEpisode<T>> = chunk.iter().map(|&i| &data[i]).collect();
            model.params.zero_grads();
            sum += model.loss_and_grad(&batch, &mut rng, None)?;
            adam_step(&mut model.params, &mut adam);
            batches += 1;
        }
        log::info!("classifier epoch {epoch}: cross-entropy {:.4}", sum / batches as f64);
    }
    Ok(model)
}

/// `k` classifiers, each trained on a same-size resample of `episodes`
/// drawn with replacement.
pub fn train_bootstrap<T: Scalar>(
    episodes: &[LabeledEpisode<T>],
    cfg: &ClassifierConfig,
    graph: &SkeletonGraph,
    k: usize,
    seed: u64,
) -> Result<Vec<Classifier<T>>> {
    validate_episodes(episodes)?;
    (0..k)
        .map(|m| {
            let mut rng = stream_rng(seed, &format!("bootstrap.resample.{m}"));
            let sample: Vec<LabeledEpisode<T>> =
                (0..episodes.len()).map(|_| episodes[rng.random_range(0..episodes.len())].clone()).collect();
            train_classifier(&sample, cfg, graph, derive_seed(seed, &format!("bootstrap.model.{m}")))
        })
        .collect()
}

fn concat_rows<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| Error::EmptyDataset("no windows".into()))?;
    let mut shape = first.shape().to_vec();
    shape[0] = parts.iter().map(|p| p.shape()[0]).sum();
    let mut data = Vec::with_capacity(shape.iter().product());
    for p in parts {
        if p.shape()[1..] != first.shape()[1..] {
            return Err(Error::shape("concat_rows", first.shape(), p.shape()));
        }
        data.extend_from_slice(p.data());
    }
    Tensor::new(&shape, data)
}
