//! Ideal-CSMA throughput on channel-partitioned contention graphs.
//!
//! APs sharing a channel form a subgraph; on each subgraph the set of
//! simultaneously transmitting APs follows the independent-set Markov chain
//! whose stationary weight of a set `σ` is `ρ^|σ|`. Throughput of an AP is
//! the stationary probability that it is transmitting, normalized to a link
//! rate of 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Adjacency;

/// Largest same-channel group handled by exhaustive enumeration.
pub const MAX_NODES_PER_CHANNEL: usize = 25;

pub const DEFAULT_ACCESS_INTENSITY: f64 = 10.0;

/// Channel assignment: one channel index per AP.
///
/// Equivalent to an `M x N` one-hot matrix whose column `i` selects the
/// channel of AP `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelMatrix {
    n_channels: usize,
    channels: Vec<usize>,
}

impl ChannelMatrix {
    pub fn new(channels: Vec<usize>, n_channels: usize) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::InvalidInput("need at least one channel".into()));
        }
        if let Some((i, &c)) = channels.iter().enumerate().find(|(_, &c)| c >= n_channels) {
            return Err(Error::InvalidInput(format!(
                "AP {i} uses channel {c}, only {n_channels} available"
            )));
        }
        Ok(Self {
            n_channels,
            channels,
        })
    }

    pub fn uniform(n_aps: usize, channel: usize, n_channels: usize) -> Result<Self> {
        Self::new(vec![channel; n_aps], n_channels)
    }

    /// Builds from an `M x N` binary matrix given as rows (one row per channel).
    pub fn from_one_hot(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidInput("channel matrix has no rows".into()));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("ragged channel matrix".into()));
        }
        let mut channels = Vec::with_capacity(n);
        for i in 0..n {
            let mut hot = None;
            for (c, row) in rows.iter().enumerate() {
                match row[i] {
                    0 => {}
                    1 if hot.is_none() => hot = Some(c),
                    1 => {
                        return Err(Error::InvalidInput(format!(
                            "column {i} has more than one entry set"
                        )))
                    }
                    x => {
                        return Err(Error::InvalidInput(format!(
                            "entry ({c}, {i}) = {x} is not binary"
                        )))
                    }
                }
            }
            let c = hot.ok_or_else(|| Error::InvalidInput(format!("column {i} is all zero")))?;
            channels.push(c);
        }
        Self::new(channels, m)
    }

    pub fn to_one_hot(&self) -> Vec<Vec<u8>> {
        (0..self.n_channels)
            .map(|c| self.channels.iter().map(|&x| (x == c) as u8).collect())
            .collect()
    }

    pub fn n_aps(&self) -> usize {
        self.channels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn channel(&self, ap: usize) -> usize {
        self.channels[ap]
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn set_channel(&mut self, ap: usize, channel: usize) {
        assert!(channel < self.n_channels, "channel {channel} out of range");
        self.channels[ap] = channel;
    }
}

/// Per-AP normalized throughput.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputVector(pub Vec<f64>);

impl ThroughputVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Values in ascending order.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Throughput of an AP that never has to defer: `ρ / (1 + ρ)`.
pub fn single_ap_ceiling(access_intensity: f64) -> f64 {
    access_intensity / (1.0 + access_intensity)
}

/// Number of contention neighbors of `ap` that share its channel.
///
/// Panics if `ap` is out of range.
pub fn conflict_count(adjacency: &Adjacency, channels: &ChannelMatrix, ap: usize) -> usize {
    assert!(ap < adjacency.n(), "AP index {ap} out of range");
    let c = channels.channel(ap);
    adjacency
        .neighbors(ap)
        .filter(|&j| channels.channel(j) == c)
        .count()
}

pub fn csma_throughput(
    adjacency: &Adjacency,
    channels: &ChannelMatrix,
    access_intensity: f64,
) -> Result<ThroughputVector> {
    let n = adjacency.n();
    if channels.n_aps() != n {
        return Err(Error::InvalidInput(format!(
            "channel matrix covers {} APs, topology has {n}",
            channels.n_aps()
        )));
    }
    if !(access_intensity > 0.0 && access_intensity.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "access intensity must be positive, got {access_intensity}"
        )));
    }

    let mut out = vec![0.0; n];
    for channel in 0..channels.n_channels() {
        let members: Vec<usize> = (0..n).filter(|&i| channels.channel(i) == channel).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() > MAX_NODES_PER_CHANNEL {
            return Err(Error::InstanceTooLarge {
                channel,
                nodes: members.len(),
                limit: MAX_NODES_PER_CHANNEL,
            });
        }
        let local = group_marginals(adjacency, &members, access_intensity);
        for (&ap, x) in members.iter().zip(local) {
            out[ap] = x;
        }
    }
    Ok(ThroughputVector(out))
}

/// Stationary transmit probabilities for the subgraph induced by `members`.
fn group_marginals(adjacency: &Adjacency, members: &[usize], rho: f64) -> Vec<f64> {
    let g = members.len();
    let masks: Vec<u32> = members
        .iter()
        .map(|&u| {
            members
                .iter()
                .enumerate()
                .filter(|&(_, &v)| adjacency.get(u, v))
                .fold(0u32, |m, (k, _)| m | (1 << k))
        })
        .collect();

    struct Walk<'a> {
        masks: &'a [u32],
        rho: f64,
        partition: f64,
        marginal: Vec<f64>,
    }

    impl Walk<'_> {
        fn visit(&mut self, k: usize, chosen: u32, blocked: u32, weight: f64) {
            if k == self.masks.len() {
                self.partition += weight;
                let mut bits = chosen;
                while bits != 0 {
                    let b = bits.trailing_zeros() as usize;
                    self.marginal[b] += weight;
                    bits &= bits - 1;
                }
                return;
            }
            self.visit(k + 1, chosen, blocked, weight);
            if blocked & (1 << k) == 0 {
                self.visit(k + 1, chosen | (1 << k), blocked | self.masks[k], weight * self.rho);
            }
        }
    }

    let mut walk = Walk {
        masks: &masks,
        rho,
        partition: 0.0,
        marginal: vec![0.0; g],
    };
    walk.visit(0, 0, 0, 1.0);
    let z = walk.partition;
    walk.marginal.into_iter().map(|w| w / z).collect()
}

/// Mean of the `k` smallest throughputs.
///
/// Panics unless `1 <= k <= len`.
pub fn reward(throughputs: &ThroughputVector, k: usize) -> f64 {
    assert!(
        k >= 1 && k <= throughputs.len(),
        "reward k = {k} outside [1, {}]",
        throughputs.len()
    );
    let sorted = throughputs.sorted();
    sorted[..k].iter().sum::<f64>() / k as f64
}
