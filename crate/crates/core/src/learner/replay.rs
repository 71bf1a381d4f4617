use std::collections::VecDeque;

use rand::Rng;

use crate::gridworld::{Action, EnvState};
use crate::safeguard::StateId;

/// One experience `(x, a, r, x')`. `q` and `next_q` name the tables the
/// update reads and writes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: EnvState,
    pub q: StateId,
    pub action: Action,
    pub reward: f64,
    pub next_s: EnvState,
    pub next_q: StateId,
    /// Violation: the target is the reward alone.
    pub terminal: bool,
}

/// Bounded FIFO buffers, one per table.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    buffers: Vec<VecDeque<Transition>>,
}

impl ReplayBuffer {
    pub fn new(num_tables: usize, capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            buffers: vec![VecDeque::new(); num_tables],
        }
    }

    pub fn len(&self, q: StateId) -> usize {
        self.buffers[q.0].len()
    }

    pub fn is_empty(&self, q: StateId) -> bool {
        self.buffers[q.0].is_empty()
    }

    pub fn push(&mut self, q: StateId, t: Transition) {
        let buf = &mut self.buffers[q.0];
        if buf.len() == self.capacity {
            buf.pop_front();
        }
        buf.push_back(t);
    }

    /// Uniform draw with replacement from the buffer of `q`.
    pub fn sample<R: Rng + ?Sized>(&self, q: StateId, rng: &mut R) -> Option<&Transition> {
        let buf = &self.buffers[q.0];
        if buf.is_empty() {
            None
        } else {
            buf.get(rng.gen_range(0..buf.len()))
        }
    }

    pub fn clear(&mut self) {
        for b in &mut self.buffers {
            b.clear();
        }
    }
}
