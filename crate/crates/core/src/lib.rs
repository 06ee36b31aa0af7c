pub mod error;
pub mod numcore;
pub mod skeleton;
pub mod simulator;
pub mod btree;
pub mod repr;
pub mod drqn;
pub mod harness;
pub mod baselines;
pub mod seeds;

pub use error::{Error, Result};
