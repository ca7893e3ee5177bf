//! Channel-allocation MDP over canonicalized (adjacency, channel) states.

use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canon::{canonical_form, ColoredGraph};
use crate::error::{Error, Result};
use crate::throughput::{self, csma_throughput, ChannelMatrix, ThroughputVector};
use crate::topology::{generate_topology, laplacian_decompose, LaplacianDecomposition, Topology, TopologyConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub topology: TopologyConfig,
    /// Reward is the mean throughput of the `reward_k` worst APs.
    pub reward_k: usize,
    pub access_intensity: f64,
    pub episode_horizon: usize,
    pub resample_topology_each_episode: bool,
    /// Seed of the single topology used when resampling is off.
    pub topology_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            topology: TopologyConfig::default(),
            reward_k: 4,
            access_intensity: throughput::DEFAULT_ACCESS_INTENSITY,
            episode_horizon: 20,
            resample_topology_each_episode: true,
            topology_seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if self.reward_k == 0 || self.reward_k > self.topology.n_aps {
            return Err(Error::InvalidConfig(format!(
                "reward_k = {} must be in [1, n_aps = {}]",
                self.reward_k, self.topology.n_aps
            )));
        }
        if !(self.access_intensity > 0.0 && self.access_intensity.is_finite()) {
            return Err(Error::InvalidConfig("access_intensity must be positive".into()));
        }
        if self.episode_horizon == 0 {
            return Err(Error::InvalidConfig("episode_horizon must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        self.topology.n_aps * self.topology.n_channels
    }
}

/// Everything the Q-network reads from a state.
#[derive(Debug)]
pub struct StateFeatures {
    pub decomposition: LaplacianDecomposition,
    /// Row `i` is the one-hot channel of canonical node `i`.
    pub node_features: Array2<f64>,
}

impl StateFeatures {
    pub fn compute(graph: &ColoredGraph, n_channels: usize) -> Result<Self> {
        let decomposition = laplacian_decompose(&graph.adjacency)?;
        let mut node_features = Array2::zeros((graph.n(), n_channels));
        for (i, &c) in graph.colors.iter().enumerate() {
            node_features[[i, c]] = 1.0;
        }
        Ok(Self {
            decomposition,
            node_features,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CanonicalState {
    /// Contention graph colored by channel, in canonical node order.
    pub graph: ColoredGraph,
    /// `perm[p]` is the canonical index of physical AP `p`.
    pub perm: Vec<usize>,
    pub step_index: usize,
    n_channels: usize,
    canonical_bytes: Vec<u8>,
    throughputs: ThroughputVector,
    reward: f64,
    features: Arc<StateFeatures>,
}

impl CanonicalState {
    pub fn n_aps(&self) -> usize {
        self.graph.n()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn canonical_bytes(&self) -> &[u8] {
        &self.canonical_bytes
    }

    /// Per-AP throughput in canonical order.
    pub fn throughputs(&self) -> &ThroughputVector {
        &self.throughputs
    }

    /// Lower-k reward of this configuration.
    pub fn reward(&self) -> f64 {
        self.reward
    }

    pub fn features(&self) -> &StateFeatures {
        &self.features
    }

    /// Channel of every physical AP.
    pub fn physical_channels(&self) -> ChannelMatrix {
        let channels = self.perm.iter().map(|&c| self.graph.colors[c]).collect();
        ChannelMatrix::new(channels, self.n_channels).expect("state colors are valid channels")
    }

    pub fn inverse_perm(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (p, &c) in self.perm.iter().enumerate() {
            inv[c] = p;
        }
        inv
    }

    /// Short hex digest of the canonical encoding.
    pub fn state_hash(&self) -> String {
        let digest = Sha256::digest(&self.canonical_bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Action in canonical node coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub ap: usize,
    pub channel: usize,
}

pub fn encode_action(ap: usize, channel: usize, n_channels: usize) -> usize {
    assert!(channel < n_channels, "channel {channel} out of range for M = {n_channels}");
    ap * n_channels + channel
}

pub fn decode_action(index: usize, n_channels: usize) -> Action {
    assert!(n_channels > 0, "M must be positive");
    Action {
        ap: index / n_channels,
        channel: index % n_channels,
    }
}

pub fn state_features(state: &CanonicalState) -> (&LaplacianDecomposition, &Array2<f64>) {
    (&state.features.decomposition, &state.features.node_features)
}

pub struct Env {
    config: EnvConfig,
    fixed_topology: Option<Topology>,
    topology: Option<Topology>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let fixed_topology = (!config.resample_topology_each_episode)
            .then(|| generate_topology(&config.topology, config.topology_seed));
        Ok(Self {
            config,
            fixed_topology,
            topology: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn n_aps(&self) -> usize {
        self.config.topology.n_aps
    }

    pub fn n_channels(&self) -> usize {
        self.config.topology.n_channels
    }

    pub fn n_actions(&self) -> usize {
        self.config.n_actions()
    }

    /// Topology of the current episode, if any episode has started.
    pub fn topology(&self) -> Option<&Topology> {
        self.topology.as_ref()
    }

    pub fn reset(&mut self, seed: u64) -> Result<CanonicalState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topology_seed: u64 = rng.gen();
        let topology = match &self.fixed_topology {
            Some(t) => t.clone(),
            None => generate_topology(&self.config.topology, topology_seed),
        };
        let m = self.n_channels();
        let channels: Vec<usize> = (0..self.n_aps()).map(|_| rng.gen_range(0..m)).collect();
        let state = self.state_from_physical(&topology, &ChannelMatrix::new(channels, m)?)?;
        self.topology = Some(topology);
        Ok(state)
    }

    /// Canonicalizes an explicit physical configuration (step index 0).
    pub fn state_from_physical(
        &self,
        topology: &Topology,
        channels: &ChannelMatrix,
    ) -> Result<CanonicalState> {
        if topology.n_aps() != self.n_aps() || channels.n_aps() != self.n_aps() {
            return Err(Error::InvalidInput(format!(
                "configuration has {} APs / {} channel columns, environment expects {}",
                topology.n_aps(),
                channels.n_aps(),
                self.n_aps()
            )));
        }
        if channels.n_channels() != self.n_channels() {
            return Err(Error::InvalidInput(format!(
                "configuration has {} channels, environment expects {}",
                channels.n_channels(),
                self.n_channels()
            )));
        }
        let physical = ColoredGraph::new(topology.adjacency.clone(), channels.channels().to_vec())?;
        let identity: Vec<usize> = (0..self.n_aps()).collect();
        self.canonicalize(&physical, &identity, 0)
    }

    /// `perm_to_graph[p]` locates physical AP `p` inside `graph`.
    fn canonicalize(
        &self,
        graph: &ColoredGraph,
        perm_to_graph: &[usize],
        step_index: usize,
    ) -> Result<CanonicalState> {
        let form = canonical_form(graph);
        let canonical = graph.permuted(&form.permutation);
        let perm = perm_to_graph.iter().map(|&g| form.permutation[g]).collect();
        let m = self.n_channels();
        let channels = ChannelMatrix::new(canonical.colors.clone(), m)?;
        let throughputs =
            csma_throughput(&canonical.adjacency, &channels, self.config.access_intensity)?;
        let reward = throughput::reward(&throughputs, self.config.reward_k);
        let features = Arc::new(StateFeatures::compute(&canonical, m)?);
        Ok(CanonicalState {
            graph: canonical,
            perm,
            step_index,
            n_channels: m,
            canonical_bytes: form.canonical_bytes,
            throughputs,
            reward,
            features,
        })
    }

    /// Applies `action` (canonical coordinates). Deterministic in its inputs.
    ///
    /// Panics when acting past the horizon or with an out-of-range action.
    pub fn step(&self, state: &CanonicalState, action: Action) -> Result<(CanonicalState, f64)> {
        assert!(
            state.step_index < self.config.episode_horizon,
            "step {} is past the episode horizon {}",
            state.step_index,
            self.config.episode_horizon
        );
        assert!(action.ap < state.n_aps(), "action AP {} out of range", action.ap);
        assert!(
            action.channel < self.n_channels(),
            "action channel {} out of range",
            action.channel
        );
        let mut next = state.graph.clone();
        next.colors[action.ap] = action.channel;
        let next_state = self.canonicalize(&next, &state.perm, state.step_index + 1)?;
        let reward = next_state.reward;
        Ok((next_state, reward))
    }

    pub fn step_flat(&self, state: &CanonicalState, action: usize) -> Result<(CanonicalState, f64)> {
        assert!(action < self.n_actions(), "flat action {action} out of range");
        self.step(state, decode_action(action, self.n_channels()))
    }
}

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub episode: u64,
    pub step: usize,
    pub state_hash: String,
    pub action: usize,
    pub reward: f64,
}

/// Writes episode traces as JSON lines.
pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn record(&mut self, record: &TraceRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
