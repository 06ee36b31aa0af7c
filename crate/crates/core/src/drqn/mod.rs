//! Recurrent Q-learning over window latents and behavior-tree context.

mod env;
mod loss;
mod policy;
mod qnet;
mod replay;
mod train;

pub use env::{latent_episodes, EnvStep, Environment, LatentEnv, LatentEpisode, ToyMdp};
pub use loss::{final_q_values, td_loss, td_piece_fingerprint};
pub use policy::DrqnPolicy;
pub use qnet::{QNet, QNetConfig, QState};
pub use replay::{EpisodeRecord, ReplayBuffer, Transition};
pub use train::{
    act_epsilon_greedy, evaluate_greedy, gated_greedy, mean_std, train, CurvePoint, TrainConfig, TrainedQNet,
};
