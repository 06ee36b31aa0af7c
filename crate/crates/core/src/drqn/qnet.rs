use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::btree::BTContext;
use crate::error::{Error, Result};
use crate::numcore::ops::{relu, relu_backward, LstmCache};
use crate::numcore::{Dense, Lstm, ParamSet, Scalar, Tensor};
use crate::repr::{read_checkpoint, write_checkpoint};
use crate::simulator::RobotAction;

/// Shape of the recurrent Q-network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QNetConfig {
    pub latent_dim: usize,
    pub context_dim: usize,
    pub hidden: usize,
}

impl Default for QNetConfig {
    fn default() -> Self {
        Self { latent_dim: 16, context_dim: BTContext::DIM, hidden: 64 }
    }
}

impl QNetConfig {
    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.context_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("q-network needs latent_dim >= 1 and hidden >= 1, got {self:?}")));
        }
        Ok(())
    }

    fn echo(&self) -> String {
        format!(
            "qnet.latent_dim = {}\nqnet.context_dim = {}\nqnet.context_layout = {}\nqnet.hidden = {}\nqnet.actions = {}\n",
            self.latent_dim,
            self.context_dim,
            BTContext::LAYOUT_VERSION,
            self.hidden,
            RobotAction::COUNT
        )
    }
}

/// LSTM hidden and cell state, `[B, hidden]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct QState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Scalar> QState<T> {
    /// Leading `n` rows.
    pub fn prefix(&self, n: usize) -> Self {
        if n == self.h.shape()[0] {
            return self.clone();
        }
        Self { h: self.h.slice_rows(0, n), c: self.c.slice_rows(0, n) }
    }
}

/// LSTM over `latent ‖ context` followed by a ReLU dense layer and a linear
/// layer with one output per [`RobotAction`].
#[derive(Debug, Clone)]
pub struct QNet {
    pub cfg: QNetConfig,
    lstm: Lstm,
    fc1: Dense,
    fc2: Dense,
}

pub(crate) struct HeadCache<T> {
    h: Tensor<T>,
    a1: Tensor<T>,
}

impl QNet {
    pub fn new<T: Scalar>(cfg: &QNetConfig, ps: &mut ParamSet<T>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = Lstm::new(ps, "q.lstm", cfg.input_dim(), cfg.hidden, &mut rng);
        let fc1 = Dense::new(ps, "q.fc1", cfg.hidden, cfg.hidden, &mut rng);
        let fc2 = Dense::new(ps, "q.fc2", cfg.hidden, RobotAction::COUNT, &mut rng);
        Ok(Self { cfg: cfg.clone(), lstm, fc1, fc2 })
    }

    pub fn zero_state<T: Scalar>(&self, batch: usize) -> QState<T> {
        let (h, c) = self.lstm.zero_state(batch);
        QState { h, c }
    }

    /// Advances the recurrent state by one input row per batch entry.
    pub(crate) fn recur<T: Scalar>(&self, ps: &ParamSet<T>, state: &QState<T>, x: &Tensor<T>) -> Result<(QState<T>, LstmCache<T>)> {
        if x.rank() != 2 || x.shape()[1] != self.cfg.input_dim() {
            return Err(Error::shape("q_forward(input)", x.shape(), &[state.h.shape()[0], self.cfg.input_dim()]));
        }
        let (h, c, cache) = self.lstm.step(ps, x, &state.h, &state.c)?;
        Ok((QState { h, c }, cache))
    }

    pub(crate) fn head<T: Scalar>(&self, ps: &ParamSet<T>, h: &Tensor<T>) -> Result<(Tensor<T>, HeadCache<T>)> {
        let a1 = relu(&self.fc1.forward(ps, h)?);
        let q = self.fc2.forward(ps, &a1)?;
        Ok((q, HeadCache { h: h.clone(), a1 }))
    }

    /// On/off pattern of the hidden ReLU units for states `h`.
    pub(crate) fn head_pattern<T: Scalar>(&self, ps: &ParamSet<T>, h: &Tensor<T>) -> Vec<bool> {
        let pre = self.fc1.forward(ps, h).expect("hidden width matches");
        pre.data().iter().map(|&v| v > T::zero()).collect()
    }

    /// Accumulates head gradients; returns `dL/dh`.
    pub(crate) fn head_backward<T: Scalar>(&self, ps: &mut ParamSet<T>, cache: &HeadCache<T>, dq: &Tensor<T>) -> Result<Tensor<T>> {
        let da1 = self.fc2.backward(ps, &cache.a1, dq)?;
        self.fc1.backward(ps, &cache.h, &relu_backward(&cache.a1, &da1))
    }

    pub(crate) fn lstm(&self) -> &Lstm {
        &self.lstm
    }

    /// Batched step: action values `[B, 6]` and the next state.
    pub fn step<T: Scalar>(&self, ps: &ParamSet<T>, state: &QState<T>, x: &Tensor<T>) -> Result<(Tensor<T>, QState<T>)> {
        let (next, _) = self.recur(ps, state, x)?;
        let (q, _) = self.head(ps, &next.h)?;
        Ok((q, next))
    }

    /// Single-sequence step on `latent ‖ context`.
    pub fn q_forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        state: &QState<T>,
        latent: &[f64],
        context: &[f64],
    ) -> Result<([f64; RobotAction::COUNT], QState<T>)> {
        if latent.len() != self.cfg.latent_dim || context.len() != self.cfg.context_dim {
            return Err(Error::shape(
                "q_forward",
                &[latent.len(), context.len()],
                &[self.cfg.latent_dim, self.cfg.context_dim],
            ));
        }
        let input: Vec<f64> = latent.iter().chain(context).copied().collect();
        let x = Tensor::from_f64(&[1, input.len()], &input)?;
        let (q, next) = self.step(ps, state, &x)?;
        let mut out = [0.0; RobotAction::COUNT];
        for (o, v) in out.iter_mut().zip(q.data()) {
            *o = v.to_f64_lossy();
        }
        Ok((out, next))
    }

    /// Multiplies every action value by `factor` by scaling the output layer.
    pub fn scale_output<T: Scalar>(&self, ps: &mut ParamSet<T>, factor: f64) {
        let f = T::from_f64_lossy(factor);
        ps.value_mut(self.fc2.w).scale(f);
        ps.value_mut(self.fc2.b).scale(f);
    }

    pub fn save<T: Scalar, W: Write>(&self, ps: &ParamSet<T>, w: W) -> Result<()> {
        let tensors: Vec<_> = ps.named_values().collect();
        write_checkpoint(w, &self.cfg.echo(), &tensors)
    }

    /// Loads parameters saved for exactly this configuration.
    pub fn load<T: Scalar, R: Read>(cfg: &QNetConfig, r: R) -> Result<(Self, ParamSet<T>)> {
        let mut ps = ParamSet::new();
        let net = Self::new(cfg, &mut ps, 0)?;
        let ck = read_checkpoint(r, Some(&cfg.echo()))?;
        ck.load_into(&mut ps)?;
        Ok((net, ps))
    }
}
