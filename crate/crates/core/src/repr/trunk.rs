use rand::Rng;

use crate::error::Result;
use crate::numcore::ops::{relu, relu_backward};
use crate::numcore::{GraphConv, ParamSet, Scalar, TemporalConv, Tensor};
use crate::skeleton::{normalized_adjacency, SkeletonGraph};

/// Stack of graph-conv + temporal-conv blocks with ReLUs, followed by mean
/// pooling over time and joints. Maps `[B, T, J, 3]` to `[B, C_last]`.
#[derive(Debug, Clone)]
pub struct GcnTrunk<T> {
    a_hat: Tensor<T>,
    gcn: Vec<GraphConv>,
    tcn: Vec<TemporalConv>,
}

struct BlockCache<T> {
    input: Tensor<T>,
    g: Tensor<T>,
    h: Tensor<T>,
}

pub struct TrunkCache<T> {
    blocks: Vec<BlockCache<T>>,
}

impl<T: Scalar> GcnTrunk<T> {
    /// Parameters are named `{prefix}.gcn{l}` and `{prefix}.tcn{l}`.
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        prefix: &str,
        graph: &SkeletonGraph,
        channels: &[usize],
        strides: &[usize],
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        assert_eq!(channels.len(), strides.len(), "one stride per block");
        let mut gcn = Vec::new();
        let mut tcn = Vec::new();
        let mut cin = 3;
        for (l, (&c, &s)) in channels.iter().zip(strides).enumerate() {
            gcn.push(GraphConv::new(ps, &format!("{prefix}.gcn{l}"), cin, c, rng));
            tcn.push(TemporalConv::new(ps, &format!("{prefix}.tcn{l}"), kernel, c, c, s, rng));
            cin = c;
        }
        Self { a_hat: normalized_adjacency(graph), gcn, tcn }
    }

    pub fn out_channels(&self) -> usize {
        self.gcn.last().map_or(3, |g| g.out_ch)
    }

    pub fn forward(&self, ps: &ParamSet<T>, x: &Tensor<T>) -> Result<(Tensor<T>, TrunkCache<T>)> {
        let mut blocks = Vec::with_capacity(self.gcn.len());
        let mut cur = x.clone();
        for (gc, tc) in self.gcn.iter().zip(&self.tcn) {
            let g = relu(&gc.forward(ps, &self.a_hat, &cur)?);
            let h = relu(&tc.forward(ps, &g)?);
            blocks.push(BlockCache { input: cur, g, h: h.clone() });
            cur = h;
        }
        let s = cur.shape().to_vec();
        let (b, c) = (s[0], s[3]);
        let per = s[1] * s[2];
        let inv = T::from_f64_lossy(1.0 / per as f64);
        let mut pooled = Tensor::zeros(&[b, c]);
        for (bi, chunk) in cur.data().chunks(per * c).enumerate() {
            let row = &mut pooled.data_mut()[bi * c..(bi + 1) * c];
            for v in chunk.chunks(c) {
                for (o, &x) in row.iter_mut().zip(v) {
                    *o += x;
                }
            }
            row.iter_mut().for_each(|o| *o *= inv);
        }
        Ok((pooled, TrunkCache { blocks }))
    }

    /// Accumulates trunk gradients from `d_pooled`.
    pub fn backward(&self, ps: &mut ParamSet<T>, cache: &TrunkCache<T>, d_pooled: &Tensor<T>) -> Result<()> {
        let last = &cache.blocks.last().expect("at least one block").h;
        let s = last.shape();
        let per = s[1] * s[2];
        let c = s[3];
        let inv = T::from_f64_lossy(1.0 / per as f64);
        let mut dh = Tensor::zeros(s);
        for (bi, chunk) in dh.data_mut().chunks_mut(per * c).enumerate() {
            let src = &d_pooled.data()[bi * c..(bi + 1) * c];
            for v in chunk.chunks_mut(c) {
                for (o, &g) in v.iter_mut().zip(src) {
                    *o = g * inv;
                }
            }
        }
        for (l, blk) in cache.blocks.iter().enumerate().rev() {
            let dh_pre = relu_backward(&blk.h, &dh);
            let dg = self.tcn[l].backward(ps, &blk.g, &dh_pre)?;
            let dg_pre = relu_backward(&blk.g, &dg);
            dh = self.gcn[l].backward(ps, &self.a_hat, &blk.input, &dg_pre)?;
        }
        Ok(())
    }

    /// Feeds every ReLU on/off state of `cache` to `h`.
    pub(crate) fn hash_masks<H: std::hash::Hasher>(cache: &TrunkCache<T>, h: &mut H) {
        use std::hash::Hash;
        for blk in &cache.blocks {
            for t in [&blk.g, &blk.h] {
                for v in t.data() {
                    (*v > T::zero()).hash(h);
                }
            }
        }
    }
}
