use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// True only for genuine terminal states, not for truncation.
    pub terminal: bool,
}

/// Ring buffer with uniform sampling; the oldest transition is overwritten first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    observation_dim: usize,
    observations: Vec<f64>,
    next_observations: Vec<f64>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    terminals: Vec<bool>,
    /// Slot the next push writes to.
    head: usize,
    len: usize,
    total_pushed: u64,
}

/// Borrowed view of one stored transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRef<'a> {
    pub observation: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub next_observation: &'a [f64],
    pub terminal: bool,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, observation_dim: usize) -> Result<Self> {
        if capacity == 0 || observation_dim == 0 {
            return Err(invalid(
                "replay capacity and observation width must be positive",
            ));
        }
        Ok(Self {
            capacity,
            observation_dim,
            observations: Vec::new(),
            next_observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            head: 0,
            len: 0,
            total_pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        for (name, o) in [
            ("observation", &t.observation),
            ("next observation", &t.next_observation),
        ] {
            if o.len() != self.observation_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.observation_dim,
                    actual: o.len(),
                    context: if name == "observation" {
                        "replay observation"
                    } else {
                        "replay next observation"
                    },
                });
            }
        }
        let d = self.observation_dim;
        if self.len < self.capacity {
            self.observations.extend_from_slice(&t.observation);
            self.next_observations
                .extend_from_slice(&t.next_observation);
            self.actions.push(t.action);
            self.rewards.push(t.reward);
            self.terminals.push(t.terminal);
            self.len += 1;
        } else {
            let k = self.head;
            self.observations[k * d..(k + 1) * d].copy_from_slice(&t.observation);
            self.next_observations[k * d..(k + 1) * d].copy_from_slice(&t.next_observation);
            self.actions[k] = t.action;
            self.rewards[k] = t.reward;
            self.terminals[k] = t.terminal;
        }
        self.head = (self.head + 1) % self.capacity;
        self.total_pushed += 1;
        Ok(())
    }

    /// Transitions in storage order; `get(0)` is the oldest.
    pub fn get(&self, i: usize) -> Option<TransitionRef<'_>> {
        if i >= self.len {
            return None;
        }
        let k = if self.len < self.capacity {
            i
        } else {
            (self.head + i) % self.capacity
        };
        Some(self.slot(k))
    }

    fn slot(&self, k: usize) -> TransitionRef<'_> {
        let d = self.observation_dim;
        TransitionRef {
            observation: &self.observations[k * d..(k + 1) * d],
            action: self.actions[k],
            reward: self.rewards[k],
            next_observation: &self.next_observations[k * d..(k + 1) * d],
            terminal: self.terminals[k],
        }
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<TransitionRef<'_>>> {
        if self.len == 0 {
            return Err(invalid("cannot sample from an empty replay buffer"));
        }
        Ok((0..batch_size)
            .map(|_| self.slot(rng.gen_range(0..self.len)))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(k: usize) -> Transition {
        Transition {
            observation: vec![k as f64, 0.0],
            action: k % 3,
            reward: k as f64,
            next_observation: vec![k as f64 + 1.0, 0.0],
            terminal: k.is_multiple_of(5),
        }
    }

    #[test]
    fn evicts_oldest_first() {
        let mut rb = ReplayBuffer::new(3, 2).unwrap();
        for k in 0..5 {
            rb.push(t(k)).unwrap();
        }
        assert_eq!(rb.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| rb.get(i).unwrap().reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
        assert_eq!(rb.get(0).unwrap().observation, &[2.0, 0.0]);
        assert!(rb.get(3).is_none());
        assert_eq!(rb.total_pushed(), 5);
    }

    #[test]
    fn rejects_wrong_width_and_empty_sampling() {
        let mut rb = ReplayBuffer::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(rb.sample(4, &mut rng).is_err());
        let mut bad = t(1);
        bad.next_observation.push(1.0);
        assert!(rb.push(bad).is_err());
        assert!(rb.is_empty());
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let mut rb = ReplayBuffer::new(10, 2).unwrap();
        for k in 0..25 {
            rb.push(t(k)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 10];
        for tr in rb.sample(50_000, &mut rng).unwrap() {
            counts[tr.reward as usize - 15] += 1;
        }
        for c in counts {
            assert!((c as f64 / 5000.0 - 1.0).abs() < 0.06, "{counts:?}");
        }
    }
}
