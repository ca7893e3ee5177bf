use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::env::CanonicalState;

#[derive(Debug, Clone)]
pub struct Transition {
    pub state: CanonicalState,
    /// Flat action index in canonical coordinates of `state`.
    pub action: usize,
    pub reward: f64,
    pub next_state: CanonicalState,
}

/// Fixed-capacity ring buffer sampled with probability `p_i^λ / Σ p_k^λ`.
#[derive(Debug, Clone)]
pub struct PrioritizedReplayBuffer {
    capacity: usize,
    exponent: f64,
    floor: f64,
    entries: Vec<Transition>,
    priorities: Vec<f64>,
    next_slot: usize,
}

impl PrioritizedReplayBuffer {
    /// `exponent` is λ; `floor` is the ε₀ added to every |TD error|.
    pub fn new(capacity: usize, exponent: f64, floor: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        assert!(exponent >= 0.0, "priority exponent must be non-negative");
        assert!(floor >= 0.0, "priority floor must be non-negative");
        Self {
            capacity,
            exponent,
            floor,
            entries: Vec::with_capacity(capacity),
            priorities: Vec::with_capacity(capacity),
            next_slot: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.entries[index]
    }

    pub fn priority(&self, index: usize) -> f64 {
        self.priorities[index]
    }

    pub fn priorities(&self) -> &[f64] {
        &self.priorities
    }

    fn max_priority(&self) -> f64 {
        self.priorities.iter().copied().fold(f64::NAN, f64::max)
    }

    /// Stores a transition at the current maximum priority (1 when empty),
    /// overwriting the oldest entry once full. Returns its slot.
    pub fn push(&mut self, transition: Transition) -> usize {
        let p = if self.is_empty() { 1.0 } else { self.max_priority() };
        let slot = self.next_slot;
        if self.entries.len() < self.capacity {
            self.entries.push(transition);
            self.priorities.push(p);
        } else {
            self.entries[slot] = transition;
            self.priorities[slot] = p;
        }
        self.next_slot = (slot + 1) % self.capacity;
        slot
    }

    /// Sampling distribution over stored slots.
    pub fn probabilities(&self) -> Vec<f64> {
        let weights: Vec<f64> = self.priorities.iter().map(|p| p.powf(self.exponent)).collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    /// Draws `batch_size` slots with replacement. Returns the slots and
    /// their sampling probabilities.
    ///
    /// Panics on an empty buffer.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> (Vec<usize>, Vec<f64>) {
        assert!(!self.is_empty(), "cannot sample from an empty replay buffer");
        let probs = self.probabilities();
        let dist = WeightedIndex::new(&probs).expect("priorities are positive and finite");
        let indices: Vec<usize> = (0..batch_size).map(|_| dist.sample(rng)).collect();
        let picked = indices.iter().map(|&i| probs[i]).collect();
        (indices, picked)
    }

    /// Sets `p_i = |δ_i| + ε₀` for every sampled slot.
    pub fn update(&mut self, indices: &[usize], td_errors: &[f64]) {
        assert_eq!(indices.len(), td_errors.len(), "one TD error per index");
        for (&i, &delta) in indices.iter().zip(td_errors) {
            self.priorities[i] = delta.abs() + self.floor;
        }
    }
}
