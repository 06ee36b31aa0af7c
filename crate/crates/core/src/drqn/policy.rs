use std::sync::Arc;

use super::qnet::{QNet, QState};
use crate::btree::{BTContext, QPolicy, Window};
use crate::error::Result;
use crate::numcore::{ParamSet, Scalar};
use crate::repr::{stack_windows, VaeModel};
use crate::simulator::RobotAction;
use crate::skeleton::SkeletonGraph;

/// Q-node policy: each window is encoded to its posterior mean and fed to
/// the recurrent Q-network. The recurrent state resets per phase.
pub struct DrqnPolicy<T: Scalar> {
    encoder: Arc<VaeModel<T>>,
    graph: SkeletonGraph,
    net: QNet,
    params: Arc<ParamSet<T>>,
    state: QState<T>,
}

impl<T: Scalar> DrqnPolicy<T> {
    pub fn new(encoder: Arc<VaeModel<T>>, graph: SkeletonGraph, net: QNet, params: Arc<ParamSet<T>>) -> Self {
        let state = net.zero_state(1);
        Self { encoder, graph, net, params, state }
    }
}

impl<T: Scalar> QPolicy for DrqnPolicy<T> {
    fn reset(&mut self) {
        self.state = self.net.zero_state(1);
    }

    fn q_values(&mut self, window: &Window, context: &BTContext) -> Result<[f64; RobotAction::COUNT]> {
        let x = stack_windows::<T>(&[&window.frames], &self.graph)?;
        let (mean, _) = self.encoder.encode(&x)?;
        let latent: Vec<f64> = mean.data().iter().map(|v| v.to_f64_lossy()).collect();
        let (q, next) = self.net.q_forward(&self.params, &self.state, &latent, context.as_slice())?;
        self.state = next;
        Ok(q)
    }
}
