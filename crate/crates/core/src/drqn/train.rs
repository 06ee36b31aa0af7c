use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::env::{EnvStep, Environment};
use super::loss::td_loss;
use super::qnet::{QNet, QNetConfig};
use super::replay::{EpisodeRecord, ReplayBuffer};
use crate::btree::argmax_wait_ties;
use crate::error::{Error, Result};
use crate::numcore::{adam_step, AdamConfig, AdamState, ParamSet, Scalar};
use crate::seeds::{derive_seed, stream_rng};
use crate::simulator::RobotAction;

/// Decision steps after which an episode is abandoned as malformed.
const MAX_EPISODE_STEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub iterations: usize,
    pub updates_per_iteration: usize,
    pub batch_size: usize,
    /// Episodes collected with the current epsilon before each iteration's
    /// updates.
    pub episodes_per_iteration: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Iterations over which epsilon decays linearly; constant afterwards.
    pub epsilon_decay_iterations: usize,
    /// Iterations between target syncs.
    pub target_sync_every: usize,
    pub learning_rate: f64,
    /// Activation threshold of the greedy evaluation policy.
    pub v_min: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            iterations: 100,
            updates_per_iteration: 50,
            batch_size: 128,
            episodes_per_iteration: 120,
            replay_capacity: 20_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_iterations: 50,
            target_sync_every: 1,
            learning_rate: 1e-3,
            v_min: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("drqn.gamma must lie in [0, 1], got {}", self.gamma));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("drqn.{name} must lie in [0, 1], got {e}"));
            }
        }
        for (name, v) in [
            ("updates_per_iteration", self.updates_per_iteration),
            ("batch_size", self.batch_size),
            ("episodes_per_iteration", self.episodes_per_iteration),
            ("replay_capacity", self.replay_capacity),
            ("target_sync_every", self.target_sync_every),
        ] {
            if v == 0 {
                return bad(format!("drqn.{name} must be positive"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("drqn.learning_rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Exploration rate used while collecting in `iteration` (0-based).
    pub fn epsilon(&self, iteration: usize) -> f64 {
        if iteration >= self.epsilon_decay_iterations {
            return self.epsilon_end;
        }
        let f = iteration as f64 / self.epsilon_decay_iterations as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }
}

/// With probability `epsilon` a uniformly random action, otherwise the
/// argmax with ties resolved towards Wait.
pub fn act_epsilon_greedy<R: Rng + ?Sized>(values: &[f64; RobotAction::COUNT], epsilon: f64, rng: &mut R) -> RobotAction {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    let idx = if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..RobotAction::COUNT)
    } else {
        argmax_wait_ties(values)
    };
    RobotAction::ALL[idx]
}

/// The action a behavior-tree Q-node would take: the argmax when it is not
/// Wait and its value exceeds `v_min`, Wait otherwise.
pub fn gated_greedy(values: &[f64; RobotAction::COUNT], v_min: f64) -> RobotAction {
    let best = argmax_wait_ties(values);
    if best != 0 && values[best] > v_min {
        RobotAction::ALL[best]
    } else {
        RobotAction::Wait
    }
}

/// Runs one episode, choosing actions from the recurrent action values.
/// Returns the record and the terminal reward.
fn rollout<T: Scalar, E: Environment + ?Sized>(
    net: &QNet,
    ps: &ParamSet<T>,
    env: &mut E,
    episode: usize,
    mut choose: impl FnMut(&[f64; RobotAction::COUNT]) -> RobotAction,
) -> Result<EpisodeRecord> {
    let mut x = env.reset(episode)?;
    let mut state = net.zero_state::<T>(1);
    let (mut inputs, mut actions) = (Vec::new(), Vec::new());
    let split = net.cfg.latent_dim;
    for _ in 0..MAX_EPISODE_STEPS {
        let (q, next) = net.q_forward(ps, &state, &x[..split], &x[split..])?;
        state = next;
        let a = choose(&q);
        inputs.push(x);
        actions.push(a);
        match env.step(a)? {
            EnvStep::Continue(nx) => x = nx,
            EnvStep::Terminal(r) => return EpisodeRecord::new(inputs, actions, r),
        }
    }
    Err(Error::InvalidArgument(format!("episode {episode} exceeded {MAX_EPISODE_STEPS} steps")))
}

/// Terminal reward of every episode of `env` under the gated greedy policy.
pub fn evaluate_greedy<T: Scalar, E: Environment + ?Sized>(net: &QNet, ps: &ParamSet<T>, env: &mut E, v_min: f64) -> Result<Vec<f64>> {
    (0..env.episode_count())
        .map(|e| rollout(net, ps, env, e, |q| gated_greedy(q, v_min)).map(|r| r.reward))
        .collect()
}

/// Learning-curve row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedQNet<T: Scalar> {
    pub net: QNet,
    pub params: ParamSet<T>,
    pub curve: Vec<CurvePoint>,
}

/// Population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Trains a Q-network on episodes of `env`. After every iteration the gated
/// greedy policy is evaluated on every episode of `eval_env` for the curve.
pub fn train<T: Scalar, E: Environment + ?Sized>(
    net_cfg: &QNetConfig,
    env: &mut E,
    eval_env: &mut dyn Environment,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedQNet<T>> {
    cfg.validate()?;
    for d in [env.input_dim(), eval_env.input_dim()] {
        if d != net_cfg.input_dim() {
            return Err(Error::shape("train(env input)", &[d], &[net_cfg.input_dim()]));
        }
    }
    if env.episode_count() == 0 {
        return Err(Error::EmptyDataset("training environment has no episodes".into()));
    }
    let mut ps = ParamSet::<T>::new();
    let net = QNet::new(net_cfg, &mut ps, derive_seed(seed, "drqn.init"))?;
    let mut target = ps.clone();
    let mut adam = AdamState::new(&ps, AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() });
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut collect_rng: ChaCha8Rng = stream_rng(seed, "drqn.collect");
    let mut sample_rng: ChaCha8Rng = stream_rng(seed, "drqn.replay");
    let mut curve = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let eps = cfg.epsilon(it);
        for _ in 0..cfg.episodes_per_iteration {
            let e = collect_rng.random_range(0..env.episode_count());
            let rec = rollout(&net, &ps, env, e, |q| act_epsilon_greedy(q, eps, &mut collect_rng))?;
            replay.push(rec);
        }
        let mut loss_sum = 0.0;
        for _ in 0..cfg.updates_per_iteration {
            let batch = replay.sample(cfg.batch_size, &mut sample_rng)?;
            ps.zero_grads();
            loss_sum += td_loss(&net, &mut ps, &target, &batch, cfg.gamma)?;
            adam_step(&mut ps, &mut adam);
        }
        if !ps.all_finite() {
            return Err(Error::NonFinite(format!("q-network parameters after iteration {it}")));
        }
        if (it + 1) % cfg.target_sync_every == 0 {
            target.copy_values_from(&ps)?;
        }
        let (mean_reward, std_reward) = mean_std(&evaluate_greedy(&net, &ps, eval_env, cfg.v_min)?);
        log::info!(
            "drqn iteration {it}: td loss {:.4}, eval reward {mean_reward:.3} ± {std_reward:.3}, epsilon {eps:.3}",
            loss_sum / cfg.updates_per_iteration as f64
        );
        curve.push(CurvePoint { iteration: it, mean_reward, std_reward, epsilon: eps });
    }
    Ok(TrainedQNet { net, params: ps, curve })
}
