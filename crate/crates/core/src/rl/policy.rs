use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{encode_action, CanonicalState};
use crate::nn::QNetwork;

/// Policy used to collect training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Sap,
    EpsilonGreedy,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a uniformly random action, otherwise a greedy
/// one with exact ties broken uniformly.
pub fn epsilon_greedy<R: Rng + ?Sized>(q_values: &Array1<f64>, epsilon: f64, rng: &mut R) -> usize {
    assert!(!q_values.is_empty(), "no actions to choose from");
    if rng.gen::<f64>() < epsilon {
        return rng.gen_range(0..q_values.len());
    }
    let max = q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = q_values
        .iter()
        .enumerate()
        .filter(|(_, &q)| q == max)
        .map(|(i, _)| i)
        .collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.gen_range(0..ties.len())]
    }
}

/// Payoff of `ap` for each candidate channel: minus the number of its
/// neighbors currently on that channel.
pub fn sap_payoffs(state: &CanonicalState, ap: usize) -> Vec<f64> {
    let mut payoffs = vec![0.0; state.n_channels()];
    for j in state.graph.adjacency.neighbors(ap) {
        payoffs[state.graph.colors[j]] -= 1.0;
    }
    payoffs
}

/// Boltzmann distribution `exp(β u) / Σ exp(β u')` over channels for `ap`.
pub fn sap_channel_probabilities(state: &CanonicalState, ap: usize, beta: f64) -> Vec<f64> {
    assert!(beta >= 0.0, "beta must be non-negative");
    let payoffs = sap_payoffs(state, ap);
    let top = payoffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = payoffs.iter().map(|u| (beta * (u - top)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Spatial adaptive play: a uniformly random AP samples its channel from the
/// Boltzmann distribution over its payoffs.
pub fn sap_select<R: Rng + ?Sized>(state: &CanonicalState, beta: f64, rng: &mut R) -> usize {
    let ap = rng.gen_range(0..state.n_aps());
    let probs = sap_channel_probabilities(state, ap, beta);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut channel = probs.len() - 1;
    for (c, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            channel = c;
            break;
        }
    }
    encode_action(ap, channel, state.n_channels())
}

pub trait Policy {
    fn act(&mut self, state: &CanonicalState, rng: &mut dyn rand::RngCore) -> usize;
}

/// Greedy with respect to a Q-network (ε = 0).
pub struct GreedyPolicy<'a>(pub &'a QNetwork);

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, state: &CanonicalState, rng: &mut dyn rand::RngCore) -> usize {
        let q = self.0.forward(state.features());
        epsilon_greedy(&q, 0.0, rng)
    }
}

pub struct SapPolicy {
    pub beta: f64,
}

impl Policy for SapPolicy {
    fn act(&mut self, state: &CanonicalState, rng: &mut dyn rand::RngCore) -> usize {
        sap_select(state, self.beta, rng)
    }
}

pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, state: &CanonicalState, rng: &mut dyn rand::RngCore) -> usize {
        rng.gen_range(0..state.n_aps() * state.n_channels())
    }
}
