//! Minimal numerical core: tensors, the layers the networks need, explicit
//! backpropagation, Adam and a finite-difference gradient checker.

mod adam;
mod gradcheck;
mod layers;
pub mod ops;
mod params;
mod scalar;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_piecewise, GradCheckReport, FD_STEP};
pub use layers::{Dense, GraphConv, Lstm, TemporalConv, TemporalConvTranspose};
pub use ops::{
    dense_forward, graph_conv_forward, lstm_step, temporal_conv_forward, LstmCache, LstmInputGrads, LstmWeights,
};
pub use params::{ParamId, ParamSet};
pub use scalar::{element_size, Precision, Scalar};
pub use tensor::{gemm, Tensor};
