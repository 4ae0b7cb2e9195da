//! Experience storage: n-step transitions in a bounded ring buffer.

use std::collections::VecDeque;
use std::sync::Arc;

use parking_lot::Mutex;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    /// Discounted sum of the next `n` rewards.
    pub reward_n: f64,
    /// Observation `n` steps later.
    pub next_obs: Vec<f64>,
    /// The episode failed within the `n` steps, so nothing is bootstrapped.
    pub done: bool,
    pub n: usize,
}

impl Transition {
    pub fn is_valid(&self) -> bool {
        self.reward_n.is_finite()
            && self.n >= 1
            && self.action.iter().all(|a| (-1.0..=1.0).contains(a))
            && self.obs.iter().chain(&self.next_obs).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Total transitions ever appended, including overwritten ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Slot indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if batch == 0 || self.storage.len() < batch {
            return Err(Error::Empty("replay buffer holds fewer transitions than the batch size"));
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.storage.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| self.storage[i].clone())
            .collect())
    }

    pub fn get(&self, slot: usize) -> Option<&Transition> {
        self.storage.get(slot)
    }
}

/// Buffer shared between collectors and the learner. Appends and samples
/// each hold the lock for their whole duration, so a sampled transition is
/// always completely written.
#[derive(Debug, Clone)]
pub struct SharedReplay(Arc<Mutex<ReplayBuffer>>);

impl SharedReplay {
    pub fn new(capacity: usize) -> Self {
        Self(Arc::new(Mutex::new(ReplayBuffer::new(capacity))))
    }

    pub fn push_all(&self, items: impl IntoIterator<Item = Transition>) {
        let mut buf = self.0.lock();
        for t in items {
            buf.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.0.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Transition>> {
        self.0.lock().sample(batch, rng)
    }
}

/// Turns a stream of single steps into n-step transitions.
#[derive(Debug, Clone)]
pub struct NStepAccumulator {
    n: usize,
    gamma: f64,
    pending: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl NStepAccumulator {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1, "n-step length must be at least 1");
        Self {
            n,
            gamma,
            pending: VecDeque::with_capacity(n),
        }
    }

    fn emit_front(&mut self, next_obs: &[f64], done: bool) -> Transition {
        let reward_n = self
            .pending
            .iter()
            .enumerate()
            .map(|(k, (_, _, r))| self.gamma.powi(k as i32) * r)
            .sum();
        let n = self.pending.len();
        let (obs, action, _) = self.pending.pop_front().unwrap();
        Transition {
            obs,
            action,
            reward_n,
            next_obs: next_obs.to_vec(),
            done,
            n,
        }
    }

    /// Records one step. `end` is `Some(failed)` when the episode stops at
    /// `next_obs`; a failure cuts off bootstrapping, a time-limit stop does
    /// not. Returns the transitions that became complete.
    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], end: Option<bool>) -> Vec<Transition> {
        self.pending.push_back((obs.to_vec(), action.to_vec(), reward));
        let mut out = Vec::new();
        match end {
            None => {
                if self.pending.len() == self.n {
                    out.push(self.emit_front(next_obs, false));
                }
            }
            Some(failed) => {
                while !self.pending.is_empty() {
                    out.push(self.emit_front(next_obs, failed));
                }
            }
        }
        out
    }

    pub fn clear(&mut self) {
        self.pending.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(tag: f64) -> Transition {
        Transition {
            obs: vec![tag],
            action: vec![0.0],
            reward_n: tag,
            next_obs: vec![tag],
            done: false,
            n: 1,
        }
    }

    #[test]
    fn ring_never_exceeds_capacity() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..10 {
            b.push(t(i as f64));
            assert!(b.len() <= 3);
        }
        assert_eq!(b.pushed(), 10);
        let mut kept: Vec<f64> = (0..3).map(|i| b.get(i).unwrap().reward_n).collect();
        kept.sort_by(f64::total_cmp);
        assert_eq!(kept, vec![7.0, 8.0, 9.0]);
    }

    #[test]
    fn sampling_needs_a_full_batch() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        b.push(t(0.0));
        assert!(b.sample(2, &mut rng).is_err());
        b.push(t(1.0));
        assert_eq!(b.sample(2, &mut rng).unwrap().len(), 2);
    }

    #[test]
    fn one_step_return_is_the_reward() {
        let mut acc = NStepAccumulator::new(1, 0.99);
        let out = acc.push(&[0.0], &[0.1], 0.7, &[1.0], None);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].reward_n, 0.7);
        assert_eq!(out[0].n, 1);
        assert!(!out[0].done);
    }

    #[test]
    fn n_step_returns_and_flush() {
        let g: f64 = 0.5;
        let mut acc = NStepAccumulator::new(3, g);
        assert!(acc.push(&[0.0], &[0.0], 1.0, &[1.0], None).is_empty());
        assert!(acc.push(&[1.0], &[0.0], 2.0, &[2.0], None).is_empty());
        let out = acc.push(&[2.0], &[0.0], 4.0, &[3.0], None);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].obs, vec![0.0]);
        assert_eq!(out[0].next_obs, vec![3.0]);
        assert!((out[0].reward_n - (1.0 + g * 2.0 + g * g * 4.0)).abs() < 1e-15);

        // episode fails: every pending step flushes with a shortened horizon
        let out = acc.push(&[3.0], &[0.0], -1.0, &[4.0], Some(true));
        assert_eq!(out.len(), 3);
        assert_eq!(out.iter().map(|t| t.n).collect::<Vec<_>>(), vec![3, 2, 1]);
        assert!(out.iter().all(|t| t.done && t.next_obs == vec![4.0]));
        assert!((out[2].reward_n + 1.0).abs() < 1e-15);
        assert!((out[1].reward_n - (4.0 - g)).abs() < 1e-15);
    }

    #[test]
    fn time_limit_flush_keeps_bootstrapping() {
        let mut acc = NStepAccumulator::new(5, 0.9);
        acc.push(&[0.0], &[0.0], 1.0, &[1.0], None);
        let out = acc.push(&[1.0], &[0.0], 1.0, &[2.0], Some(false));
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|t| !t.done));
    }
}
