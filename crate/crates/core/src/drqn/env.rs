use crate::btree::BTContext;
use crate::error::{Error, Result};
use crate::numcore::Scalar;
use crate::repr::{stack_windows, VaeModel};
use crate::simulator::{resolve_decision, PhaseScript, RobotAction, Session};
use crate::skeleton::SkeletonGraph;

/// What the environment returned after an action.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvStep {
    /// The episode continues; the next Q-network input.
    Continue(Vec<f64>),
    /// The episode ended with this reward.
    Terminal(f64),
}

/// Episodic environment with a fixed catalogue of start conditions.
pub trait Environment {
    fn input_dim(&self) -> usize;
    fn episode_count(&self) -> usize;
    /// Starts episode `episode` and returns the first input.
    fn reset(&mut self, episode: usize) -> Result<Vec<f64>>;
    fn step(&mut self, action: RobotAction) -> Result<EnvStep>;
}

/// One phase with its window latents precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEpisode {
    pub script: PhaseScript,
    /// Posterior mean of window `i + 1`.
    pub latents: Vec<Vec<f64>>,
    pub context: BTContext,
}

/// Encodes every window of every phase with the posterior mean.
pub fn latent_episodes<T: Scalar>(sessions: &[Session], model: &VaeModel<T>, graph: &SkeletonGraph) -> Result<Vec<LatentEpisode>> {
    let mut out = Vec::new();
    for s in sessions {
        for (p, script) in s.script.phases.iter().enumerate() {
            let n = script.window_count();
            let windows: Vec<_> = (1..=n).map(|i| s.window(p, i)).collect();
            let means = model.encode_means(&stack_windows::<T>(&windows, graph)?, 256)?;
            let l = model.latent_dim();
            let latents = means.data().chunks(l).map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect();
            out.push(LatentEpisode { script: script.clone(), latents, context: BTContext::for_phase(script) });
        }
    }
    Ok(out)
}

/// Phase episodes over precomputed latents. The input at decision `i` is
/// `latent_i ‖ context`; timing and rewards follow the simulator.
#[derive(Debug, Clone)]
pub struct LatentEnv {
    episodes: Vec<LatentEpisode>,
    current: Option<(usize, usize)>,
}

impl LatentEnv {
    pub fn new(episodes: Vec<LatentEpisode>) -> Result<Self> {
        let Some(first) = episodes.first() else {
            return Err(Error::EmptyDataset("latent environment needs at least one episode".into()));
        };
        let dim = first.latents.first().map_or(0, Vec::len);
        for e in &episodes {
            if e.latents.is_empty() || e.latents.iter().any(|l| l.len() != dim) {
                return Err(Error::InvalidArgument("latent episodes need one equal-width latent per window".into()));
            }
        }
        Ok(Self { episodes, current: None })
    }

    pub fn episodes(&self) -> &[LatentEpisode] {
        &self.episodes
    }

    fn input(&self, e: usize, i: usize) -> Vec<f64> {
        let ep = &self.episodes[e];
        ep.latents[i].iter().chain(ep.context.as_slice()).copied().collect()
    }
}

impl Environment for LatentEnv {
    fn input_dim(&self) -> usize {
        self.episodes[0].latents[0].len() + BTContext::DIM
    }

    fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    fn reset(&mut self, episode: usize) -> Result<Vec<f64>> {
        if episode >= self.episodes.len() {
            return Err(Error::InvalidArgument(format!("episode {episode} out of range")));
        }
        self.current = Some((episode, 0));
        Ok(self.input(episode, 0))
    }

    fn step(&mut self, action: RobotAction) -> Result<EnvStep> {
        let (e, i) = self.current.ok_or(Error::EpisodeTerminated)?;
        let script = &self.episodes[e].script;
        // Window `i + 1` ends at `i + 1` seconds.
        let outcome = match resolve_decision(script, (i + 1) as f64, action)? {
            Some(o) => Some(o),
            None if i + 1 == self.episodes[e].latents.len() => resolve_decision(script, script.t_trigger, RobotAction::Wait)?,
            None => None,
        };
        if let Some(o) = outcome {
            self.current = None;
            return Ok(EnvStep::Terminal(o.reward));
        }
        self.current = Some((e, i + 1));
        Ok(EnvStep::Continue(self.input(e, i + 1)))
    }
}

/// Number of proactive actions, i.e. every action but Wait.
const PROACTIVE: usize = RobotAction::COUNT - 1;

/// Fully observable chain: the input is the one-hot state, Wait moves from
/// state `s` to `s + 1` with reward 0 (ending the episode after the last
/// state), and any other action ends the episode with a fixed reward.
#[derive(Debug, Clone)]
pub struct ToyMdp {
    rewards: Vec<[f64; PROACTIVE]>,
    state: Option<usize>,
}

impl ToyMdp {
    pub fn new(rewards: Vec<[f64; PROACTIVE]>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::InvalidArgument("toy MDP needs at least one state".into()));
        }
        Ok(Self { rewards, state: None })
    }

    /// The three-state chain used in tests and acceptance.
    pub fn three_state() -> Self {
        Self::new(vec![
            [1.0, -0.5, 0.3, 0.0, -1.0],
            [0.5, 2.0, -0.5, 0.8, 0.1],
            [-1.0, 0.4, 1.5, 0.2, 0.0],
        ])
        .expect("non-empty")
    }

    pub fn states(&self) -> usize {
        self.rewards.len()
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.rewards.len()];
        v[s] = 1.0;
        v
    }

    /// Optimal action values by repeated Bellman backups until the largest
    /// change falls below `tol`.
    pub fn value_iteration(&self, gamma: f64, tol: f64) -> Vec<[f64; RobotAction::COUNT]> {
        let n = self.rewards.len();
        let mut q = vec![[0.0; RobotAction::COUNT]; n];
        loop {
            let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            let mut delta: f64 = 0.0;
            for s in 0..n {
                let wait = if s + 1 < n { gamma * v[s + 1] } else { 0.0 };
                let mut row = [wait; RobotAction::COUNT];
                row[1..].copy_from_slice(&self.rewards[s]);
                for (old, new) in q[s].iter().zip(&row) {
                    delta = delta.max((old - new).abs());
                }
                q[s] = row;
            }
            if delta < tol {
                return q;
            }
        }
    }
}

impl Environment for ToyMdp {
    fn input_dim(&self) -> usize {
        self.rewards.len()
    }

    /// Episode `e` starts in state `e`.
    fn episode_count(&self) -> usize {
        self.rewards.len()
    }

    fn reset(&mut self, episode: usize) -> Result<Vec<f64>> {
        if episode >= self.rewards.len() {
            return Err(Error::InvalidArgument(format!("episode {episode} out of range")));
        }
        self.state = Some(episode);
        Ok(self.one_hot(episode))
    }

    fn step(&mut self, action: RobotAction) -> Result<EnvStep> {
        let s = self.state.ok_or(Error::EpisodeTerminated)?;
        if !action.is_wait() {
            self.state = None;
            return Ok(EnvStep::Terminal(self.rewards[s][action.index() - 1]));
        }
        if s + 1 == self.rewards.len() {
            self.state = None;
            return Ok(EnvStep::Terminal(0.0));
        }
        self.state = Some(s + 1);
        Ok(EnvStep::Continue(self.one_hot(s + 1)))
    }
}
