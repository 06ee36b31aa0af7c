use super::qnet::{HeadCache, QNet};
use super::replay::Transition;
use crate::error::{Error, Result};
use crate::numcore::ops::LstmCache;
use crate::numcore::{ParamSet, Scalar, Tensor};
use crate::simulator::RobotAction;

/// Sequences ordered by length, longest first, so the rows still running at
/// any step form a prefix of the batch.
struct Unroll<'a> {
    order: Vec<usize>,
    seqs: Vec<&'a [Vec<f64>]>,
}

impl<'a> Unroll<'a> {
    fn new(seqs: Vec<&'a [Vec<f64>]>) -> Self {
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.sort_by_key(|&b| std::cmp::Reverse(seqs[b].len()));
        Self { order, seqs }
    }

    fn max_len(&self) -> usize {
        self.order.first().map_or(0, |&b| self.seqs[b].len())
    }

    /// Number of sorted rows with more than `t` inputs.
    fn active(&self, t: usize) -> usize {
        self.order.partition_point(|&b| self.seqs[b].len() > t)
    }

    fn inputs<T: Scalar>(&self, t: usize, rows: usize, dim: usize) -> Result<Tensor<T>> {
        let mut v = Vec::with_capacity(rows * dim);
        for &b in &self.order[..rows] {
            let x = &self.seqs[b][t];
            if x.len() != dim {
                return Err(Error::shape("td_loss(input)", &[x.len()], &[dim]));
            }
            v.extend_from_slice(x);
        }
        Tensor::from_f64(&[rows, dim], &v)
    }
}

fn pad_rows<T: Scalar>(x: &Tensor<T>, rows: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(&[rows, x.shape()[1]]);
    out.data_mut()[..x.len()].copy_from_slice(x.data());
    out
}

/// Action values after the last input of every sequence, in input order.
pub fn final_q_values<T: Scalar>(net: &QNet, ps: &ParamSet<T>, seqs: &[&[Vec<f64>]]) -> Result<Vec<[f64; RobotAction::COUNT]>> {
    let un = Unroll::new(seqs.to_vec());
    if un.order.iter().any(|&b| un.seqs[b].is_empty()) {
        return Err(Error::InvalidArgument("empty input sequence".into()));
    }
    let mut out = vec![[0.0; RobotAction::COUNT]; seqs.len()];
    let mut state = net.zero_state::<T>(un.active(0));
    for t in 0..un.max_len() {
        let (active, done) = (un.active(t), un.active(t + 1));
        let x = un.inputs(t, active, net.cfg.input_dim())?;
        let (next, _) = net.recur(ps, &state.prefix(active), &x)?;
        if done < active {
            let (q, _) = net.head(ps, &next.h.slice_rows(done, active))?;
            for (r, row) in q.data().chunks(RobotAction::COUNT).enumerate() {
                for (o, v) in out[un.order[done + r]].iter_mut().zip(row) {
                    *o = v.to_f64_lossy();
                }
            }
        }
        state = next;
    }
    Ok(out)
}

/// Mean squared TD error over `batch`, with gradients accumulated into
/// `ps`. Targets come from `target_ps` and are constants.
pub fn td_loss<T: Scalar>(
    net: &QNet,
    ps: &mut ParamSet<T>,
    target_ps: &ParamSet<T>,
    batch: &[Transition<'_>],
    gamma: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("td_loss batch".into()));
    }
    let n = batch.len();

    let next_seqs: Vec<&[Vec<f64>]> = batch
        .iter()
        .filter(|tr| !tr.is_terminal())
        .map(|tr| &tr.episode.inputs[..tr.step + 2])
        .collect();
    let mut next_q = if next_seqs.is_empty() {
        Vec::new()
    } else {
        final_q_values(net, target_ps, &next_seqs)?
    }
    .into_iter();
    let y: Vec<f64> = batch
        .iter()
        .map(|tr| {
            if tr.is_terminal() {
                tr.reward()
            } else {
                let q = next_q.next().expect("one target row per non-terminal sample");
                tr.reward() + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();

    let un = Unroll::new(batch.iter().map(|tr| &tr.episode.inputs[..=tr.step]).collect());
    let steps = un.max_len();
    let dim = net.cfg.input_dim();
    let mut lstm_caches: Vec<LstmCache<T>> = Vec::with_capacity(steps);
    // Head caches for the rows `[done, active)` ending at each step.
    let mut heads: Vec<Option<(usize, usize, HeadCache<T>, Tensor<T>)>> = Vec::with_capacity(steps);
    let mut loss = 0.0;
    let mut state = net.zero_state::<T>(n);
    for t in 0..steps {
        let (active, done) = (un.active(t), un.active(t + 1));
        let x = un.inputs(t, active, dim)?;
        let (next, cache) = net.recur(ps, &state.prefix(active), &x)?;
        lstm_caches.push(cache);
        if done < active {
            let (q, hc) = net.head(ps, &next.h.slice_rows(done, active))?;
            let mut dq = Tensor::<T>::zeros(q.shape());
            for r in 0..active - done {
                let b = un.order[done + r];
                let a = batch[b].action().index();
                let diff = q.get(&[r, a]).to_f64_lossy() - y[b];
                loss += diff * diff;
                dq.set(&[r, a], T::from_f64_lossy(2.0 * diff / n as f64));
            }
            heads.push(Some((done, active, hc, dq)));
        } else {
            heads.push(None);
        }
        state = next;
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("td_loss".into()));
    }

    let hd = net.cfg.hidden;
    let mut carry: Option<(Tensor<T>, Tensor<T>)> = None;
    for t in (0..steps).rev() {
        let active = un.active(t);
        let (mut dh, dc) = match carry.take() {
            Some((dh, dc)) => (pad_rows(&dh, active), pad_rows(&dc, active)),
            None => (Tensor::zeros(&[active, hd]), Tensor::zeros(&[active, hd])),
        };
        if let Some((done, end, hc, dq)) = heads[t].take() {
            let dh_head = net.head_backward(ps, &hc, &dq)?;
            for (o, g) in dh.data_mut()[done * hd..end * hd].iter_mut().zip(dh_head.data()) {
                *o += *g;
            }
        }
        let g = net.lstm().step_backward(ps, &lstm_caches[t], &dh, &dc)?;
        carry = Some((g.dh, g.dc));
    }
    Ok(loss)
}

/// Hash of the hidden ReLU pattern at every history in `batch`; constant
/// on each smooth piece of [`td_loss`] in the online parameters.
pub fn td_piece_fingerprint<T: Scalar>(net: &QNet, ps: &ParamSet<T>, batch: &[Transition<'_>]) -> Result<u64> {
    use std::hash::{DefaultHasher, Hash, Hasher};
    let mut h = DefaultHasher::new();
    for tr in batch {
        let mut state = net.zero_state(1);
        for x in &tr.episode.inputs[..=tr.step] {
            let (next, _) = net.recur(ps, &state, &Tensor::from_f64(&[1, x.len()], x)?)?;
            state = next;
        }
        for bit in net.head_pattern(ps, &state.h) {
            bit.hash(&mut h);
        }
    }
    Ok(h.finish())
}
