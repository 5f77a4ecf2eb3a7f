use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dispatch::action::{ActionIndex, ActionMask};
use crate::dispatch::features::StateFeatures;
use crate::error::{Error, Result};

/// One decision-to-decision experience of a single vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: StateFeatures,
    pub action: ActionIndex,
    pub reward: f64,
    pub next_features: StateFeatures,
    /// Actions that were legal in the next state.
    pub next_mask: ActionMask,
    pub terminal: bool,
}

/// Fixed-capacity FIFO memory with a seeded uniform sampler.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)), rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// Positions drawn uniformly with replacement.
    pub fn sample_indices(&mut self, batch: usize) -> Result<Vec<usize>> {
        if batch == 0 || self.items.len() < batch {
            return Err(Error::contract(format!("cannot sample {batch} from a buffer holding {}", self.items.len())));
        }
        let n = self.items.len();
        Ok((0..batch).map(|_| self.rng.random_range(0..n)).collect())
    }

    pub fn sample(&mut self, batch: usize) -> Result<Vec<Transition>> {
        let idx = self.sample_indices(batch)?;
        Ok(idx.into_iter().map(|i| self.items[i].clone()).collect())
    }
}

/// Convenience alias matching the operation name used by callers.
pub fn push_transition(buf: &mut ReplayBuffer, t: Transition) {
    buf.push(t);
}
