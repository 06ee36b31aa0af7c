use super::params::ParamSet;
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let m: Vec<_> = params.ids().map(|id| Tensor::zeros(params.value(id).shape())).collect();
        Self {
            config,
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update applied in place. Gradients are left
/// untouched; the caller zeroes them.
pub fn adam_step<T: Scalar>(params: &mut ParamSet<T>, state: &mut AdamState<T>) {
    assert_eq!(state.m.len(), params.len(), "optimizer state does not match parameters");
    state.step += 1;
    let c = state.config;
    let t = state.step as f64;
    let bc1 = 1.0 - c.beta1.powf(t);
    let bc2 = 1.0 - c.beta2.powf(t);
    let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
    let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - c.beta1), T::from_f64_lossy(1.0 - c.beta2));
    let step_size = T::from_f64_lossy(c.lr / bc1);
    let inv_sqrt_bc2 = T::from_f64_lossy(1.0 / bc2.sqrt());
    let eps = T::from_f64_lossy(c.eps);
    let ids: Vec<_> = params.ids().collect();
    for (slot, id) in ids.into_iter().enumerate() {
        let grad = params.grad(id).data().to_vec();
        let m = state.m[slot].data_mut();
        let v = state.v[slot].data_mut();
        let p = params.value_mut(id).data_mut();
        for i in 0..p.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + one_b1 * g;
            v[i] = b2 * v[i] + one_b2 * g * g;
            p[i] -= step_size * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
        }
    }
}
