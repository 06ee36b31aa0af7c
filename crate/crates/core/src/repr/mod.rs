//! Graph-convolutional β-VAE over 25-frame skeleton windows.

mod checkpoint;
mod model;
mod train;
mod trunk;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use model::{standard_normal, vae_loss, LossParts, Normalizer, PosteriorSample, VaeConfig, VaeNet, DEFAULT_AUX_WEIGHT, LOG_VAR_CLAMP};
pub use trunk::{GcnTrunk, TrunkCache};
pub use train::{gather, stack_windows, train_vae, train_vae_with_aux, EpochStats, VaeModel};

#[cfg(test)]
mod tests;
