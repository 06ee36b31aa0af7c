use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::simulator::RobotAction;

/// One finished episode: the input seen before each decision and the action
/// taken. Only the last decision is terminal and carries `reward`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub inputs: Vec<Vec<f64>>,
    pub actions: Vec<RobotAction>,
    pub reward: f64,
}

impl EpisodeRecord {
    pub fn new(inputs: Vec<Vec<f64>>, actions: Vec<RobotAction>, reward: f64) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != actions.len() {
            return Err(Error::InvalidArgument(format!(
                "episode needs one input per action and at least one step ({} inputs, {} actions)",
                inputs.len(),
                actions.len()
            )));
        }
        if actions[..actions.len() - 1].iter().any(|a| !a.is_wait()) {
            return Err(Error::InvalidArgument("only the last action of an episode may be non-Wait".into()));
        }
        Ok(Self { inputs, actions, reward })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Experience `step` of an episode: inputs `0..=step` form the history,
/// `inputs[step + 1]` the successor history when not terminal.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub episode: &'a EpisodeRecord,
    pub step: usize,
}

impl Transition<'_> {
    pub fn is_terminal(&self) -> bool {
        self.step + 1 == self.episode.len()
    }

    pub fn action(&self) -> RobotAction {
        self.episode.actions[self.step]
    }

    pub fn reward(&self) -> f64 {
        if self.is_terminal() {
            self.episode.reward
        } else {
            0.0
        }
    }
}

/// FIFO store of experiences, sampled uniformly. Episodes are kept whole
/// while any of their experiences remain, so every history can be replayed
/// from the episode start.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
    /// Id of `episodes[0]`.
    first_id: u64,
    /// `(episode id, step)` in insertion order.
    items: VecDeque<(u64, usize)>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, episodes: VecDeque::new(), first_id: 0, items: VecDeque::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of stored experiences.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        let id = self.first_id + self.episodes.len() as u64;
        for step in 0..episode.len() {
            self.items.push_back((id, step));
        }
        self.episodes.push_back(episode);
        while self.items.len() > self.capacity {
            self.items.pop_front();
        }
        let oldest = self.items.front().map_or(id + 1, |&(i, _)| i);
        while self.first_id < oldest {
            self.episodes.pop_front();
            self.first_id += 1;
        }
    }

    pub fn get(&self, index: usize) -> Transition<'_> {
        let (id, step) = self.items[index];
        Transition { episode: &self.episodes[(id - self.first_id) as usize], step }
    }

    /// `n` experiences drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition<'_>>> {
        if self.is_empty() {
            return Err(Error::EmptyDataset("replay buffer is empty".into()));
        }
        Ok((0..n).map(|_| self.get(rng.random_range(0..self.items.len()))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(steps: usize, tag: f64) -> EpisodeRecord {
        let mut actions = vec![RobotAction::Wait; steps];
        actions[steps - 1] = RobotAction::LiftBox;
        EpisodeRecord::new((0..steps).map(|s| vec![tag, s as f64]).collect(), actions, tag).unwrap()
    }

    #[test]
    fn fifo_eviction_keeps_histories_whole() {
        let mut rb = ReplayBuffer::new(5);
        rb.push(episode(3, 1.0));
        rb.push(episode(3, 2.0));
        assert_eq!(rb.len(), 5);
        // The oldest surviving experience is step 1 of episode 1.
        let t = rb.get(0);
        assert_eq!((t.episode.reward, t.step), (1.0, 1));
        assert_eq!(t.episode.inputs[0], vec![1.0, 0.0]);
        rb.push(episode(4, 3.0));
        assert_eq!(rb.len(), 5);
        assert!((0..5).all(|i| rb.get(i).episode.reward != 1.0));
    }

    #[test]
    fn transitions_report_terminal_reward_only_at_the_end() {
        let mut rb = ReplayBuffer::new(10);
        rb.push(episode(3, 2.5));
        assert_eq!(rb.get(0).reward(), 0.0);
        assert!(!rb.get(1).is_terminal());
        assert!(rb.get(2).is_terminal());
        assert_eq!(rb.get(2).reward(), 2.5);
        assert_eq!(rb.get(2).action(), RobotAction::LiftBox);
    }

    #[test]
    fn rejects_malformed_episodes() {
        assert!(EpisodeRecord::new(vec![], vec![], 0.0).is_err());
        assert!(EpisodeRecord::new(vec![vec![0.0]], vec![], 0.0).is_err());
        let acts = vec![RobotAction::LiftBox, RobotAction::Wait];
        assert!(EpisodeRecord::new(vec![vec![0.0], vec![1.0]], acts, 0.0).is_err());
        assert!(ReplayBuffer::new(3).sample(1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn sampling_is_uniform() {
        let mut rb = ReplayBuffer::new(1000);
        for e in 0..1000 {
            rb.push(episode(1, e as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut counts = vec![0usize; 1000];
        for t in rb.sample(draws, &mut rng).unwrap() {
            counts[t.episode.reward as usize] += 1;
        }
        let expected = draws as f64 / 1000.0;
        let sd = (expected * (1.0 - 1e-3)).sqrt();
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // Chi-square with 999 degrees of freedom: mean 999, sd ~44.7.
        assert!((chi2 - 999.0).abs() < 3.0 * (2.0f64 * 999.0).sqrt(), "chi2 {chi2}");
        let worst = counts.iter().map(|&c| (c as f64 - expected).abs() / sd).fold(0.0, f64::max);
        assert!(worst < 4.5, "max deviation {worst} sd");
    }
}
