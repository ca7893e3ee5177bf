//! Small dense/GCN network engine with hand-written reverse-mode gradients.

mod adam;
mod layers;
mod persist;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::StateFeatures;
use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layers::{gcn_forward, Dense, GcnLayer};
pub use persist::{load_network, save_network, FORMAT_VERSION, MAGIC};

use layers::{DenseCache, GcnCache};

/// Layer widths. Input and output sizes follow from the environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub gcn_layers: usize,
    /// Per-node feature width after each GCN layer.
    pub gcn_width: usize,
    pub dense_width: usize,
    /// Hidden width of each dueling stream.
    pub stream_width: usize,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            gcn_layers: 2,
            gcn_width: 32,
            dense_width: 128,
            stream_width: 64,
        }
    }
}

impl NnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gcn_layers == 0 || self.gcn_width == 0 || self.dense_width == 0 || self.stream_width == 0 {
            return Err(Error::InvalidConfig("network widths and depth must be positive".into()));
        }
        Ok(())
    }
}

/// GCN front end, or plain dense layers over the flattened `(A, C)` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Gcn,
    Mlp,
}

/// `q_a = value + advantage_a - mean(advantages)`.
pub fn dueling_combine(value: f64, advantages: &Array1<f64>) -> Array1<f64> {
    assert!(!advantages.is_empty(), "dueling head needs at least one advantage");
    let mean = advantages.mean().expect("non-empty");
    advantages.mapv(|a| value + a - mean)
}

/// Huber loss with threshold 1 on `prediction - target`, and its derivative
/// with respect to `prediction`.
pub fn huber_loss(prediction: f64, target: f64) -> (f64, f64) {
    let delta = prediction - target;
    if delta.abs() <= 1.0 {
        (0.5 * delta * delta, delta)
    } else {
        (delta.abs() - 0.5, delta.signum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Dueling Q-network over canonical states.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    family: ModelFamily,
    n_aps: usize,
    n_channels: usize,
    config: NnConfig,
    gcn: Vec<GcnLayer>,
    input_dense: Vec<Dense>,
    trunk: Dense,
    value_hidden: Dense,
    value_out: Dense,
    advantage_hidden: Dense,
    advantage_out: Dense,
}

/// Activations recorded by [`QNetwork::forward_cached`], consumed by
/// [`QNetwork::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    eigenvectors: Option<Array2<f64>>,
    gcn: Vec<GcnCache>,
    input_dense: Vec<DenseCache>,
    trunk: DenseCache,
    value_hidden: DenseCache,
    value_out: DenseCache,
    advantage_hidden: DenseCache,
    advantage_out: DenseCache,
}

impl ForwardCache {
    /// Signs of every ReLU pre-activation, for detecting kinks in
    /// finite-difference checks.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for c in &self.gcn {
            out.extend(c.pre_activation.iter().map(|&v| v > 0.0));
        }
        for c in self
            .input_dense
            .iter()
            .chain([&self.trunk, &self.value_hidden, &self.advantage_hidden])
        {
            out.extend(c.pre_activation.iter().map(|&v| v > 0.0));
        }
        out
    }
}

impl QNetwork {
    pub fn new(family: ModelFamily, n_aps: usize, n_channels: usize, config: &NnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.gcn_width;
        let mut gcn = Vec::new();
        let mut input_dense = Vec::new();
        match family {
            ModelFamily::Gcn => {
                for layer in 0..config.gcn_layers {
                    let d_in = if layer == 0 { n_channels } else { w };
                    gcn.push(GcnLayer::init(n_aps, d_in, w, &mut rng));
                }
            }
            ModelFamily::Mlp => {
                for layer in 0..config.gcn_layers {
                    let d_in = if layer == 0 { n_aps * n_aps + n_aps * n_channels } else { w * n_aps };
                    input_dense.push(Dense::glorot(d_in, w * n_aps, &mut rng));
                }
            }
        }
        let trunk = Dense::glorot(w * n_aps, config.dense_width, &mut rng);
        let value_hidden = Dense::glorot(config.dense_width, config.stream_width, &mut rng);
        let value_out = Dense::glorot(config.stream_width, 1, &mut rng);
        let advantage_hidden = Dense::glorot(config.dense_width, config.stream_width, &mut rng);
        let advantage_out = Dense::glorot(config.stream_width, n_aps * n_channels, &mut rng);
        Self {
            family,
            n_aps,
            n_channels,
            config: config.clone(),
            gcn,
            input_dense,
            trunk,
            value_hidden,
            value_out,
            advantage_hidden,
            advantage_out,
        }
    }

    /// A network that outputs `q` for every input: all weights zero, the
    /// advantage bias set to `q` and the value bias to its mean.
    pub fn constant(family: ModelFamily, n_aps: usize, n_channels: usize, config: &NnConfig, q: &[f64]) -> Self {
        assert_eq!(q.len(), n_aps * n_channels, "constant output has wrong length");
        let mut net = Self::new(family, n_aps, n_channels, config, 0).zeros_like();
        net.advantage_out.bias = Array1::from(q.to_vec());
        net.value_out.bias[0] = q.iter().sum::<f64>() / q.len() as f64;
        net
    }

    /// Same architecture with every parameter zero; used as a gradient
    /// accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for p in out.params_mut() {
            p.fill(0.0);
        }
        out
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn n_aps(&self) -> usize {
        self.n_aps
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_actions(&self) -> usize {
        self.n_aps * self.n_channels
    }

    pub fn config(&self) -> &NnConfig {
        &self.config
    }

    pub fn gcn_layers(&self) -> &[GcnLayer] {
        &self.gcn
    }

    pub fn same_architecture(&self, other: &QNetwork) -> bool {
        self.family == other.family
            && self.n_aps == other.n_aps
            && self.n_channels == other.n_channels
            && self.config == other.config
    }

    fn dense_layers(&self) -> Vec<(String, &Dense)> {
        let mut out: Vec<(String, &Dense)> = self
            .input_dense
            .iter()
            .enumerate()
            .map(|(i, d)| (format!("input.{i}"), d))
            .collect();
        out.push(("trunk".into(), &self.trunk));
        out.push(("value_hidden".into(), &self.value_hidden));
        out.push(("value_out".into(), &self.value_out));
        out.push(("advantage_hidden".into(), &self.advantage_hidden));
        out.push(("advantage_out".into(), &self.advantage_out));
        out
    }

    pub fn tensor_infos(&self) -> Vec<TensorInfo> {
        let mut out = Vec::new();
        for (i, g) in self.gcn.iter().enumerate() {
            out.push(TensorInfo {
                name: format!("gcn.{i}.spectral_coeffs"),
                shape: g.spectral_coeffs.shape().to_vec(),
            });
            out.push(TensorInfo {
                name: format!("gcn.{i}.mix_weights"),
                shape: g.mix_weights.shape().to_vec(),
            });
            out.push(TensorInfo {
                name: format!("gcn.{i}.mix_bias"),
                shape: g.mix_bias.shape().to_vec(),
            });
        }
        for (name, d) in self.dense_layers() {
            out.push(TensorInfo {
                name: format!("{name}.weights"),
                shape: d.weights.shape().to_vec(),
            });
            out.push(TensorInfo {
                name: format!("{name}.bias"),
                shape: d.bias.shape().to_vec(),
            });
        }
        out
    }

    /// Parameter blocks in [`tensor_infos`](Self::tensor_infos) order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for g in &self.gcn {
            out.push(g.spectral_coeffs.as_slice().expect("standard layout"));
            out.push(g.mix_weights.as_slice().expect("standard layout"));
            out.push(g.mix_bias.as_slice().expect("standard layout"));
        }
        for (_, d) in self.dense_layers() {
            out.push(d.weights.as_slice().expect("standard layout"));
            out.push(d.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for g in &mut self.gcn {
            out.push(g.spectral_coeffs.as_slice_mut().expect("standard layout"));
            out.push(g.mix_weights.as_slice_mut().expect("standard layout"));
            out.push(g.mix_bias.as_slice_mut().expect("standard layout"));
        }
        for d in self.input_dense.iter_mut().chain([
            &mut self.trunk,
            &mut self.value_hidden,
            &mut self.value_out,
            &mut self.advantage_hidden,
            &mut self.advantage_out,
        ]) {
            out.push(d.weights.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn copy_params_from(&mut self, other: &QNetwork) {
        assert!(self.same_architecture(other), "cannot copy between architectures");
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.copy_from_slice(src);
        }
    }

    fn check_input(&self, features: &StateFeatures) {
        assert_eq!(features.node_features.nrows(), self.n_aps, "state has wrong AP count");
        assert_eq!(
            features.node_features.ncols(),
            self.n_channels,
            "state has wrong channel count"
        );
    }

    pub fn forward(&self, features: &StateFeatures) -> Array1<f64> {
        self.forward_cached(features).0
    }

    pub fn forward_cached(&self, features: &StateFeatures) -> (Array1<f64>, ForwardCache) {
        self.check_input(features);
        let mut gcn_caches = Vec::with_capacity(self.gcn.len());
        let mut dense_caches = Vec::with_capacity(self.input_dense.len());
        let (flat, eigenvectors) = match self.family {
            ModelFamily::Gcn => {
                let u = features.decomposition.eigenvectors.clone();
                let mut x = features.node_features.clone();
                for layer in &self.gcn {
                    let (out, cache) = layer.forward_cached(&u, &x);
                    gcn_caches.push(cache);
                    x = out;
                }
                let flat = Array1::from_iter(x.iter().copied());
                (flat, Some(u))
            }
            ModelFamily::Mlp => {
                let adjacency = &features.decomposition.degree - &features.decomposition.laplacian;
                let mut x = Array1::from_iter(
                    adjacency.iter().chain(features.node_features.iter()).copied(),
                );
                for layer in &self.input_dense {
                    let (out, cache) = layer.forward_cached(x, true);
                    dense_caches.push(cache);
                    x = out;
                }
                (x, None)
            }
        };
        let (trunk_out, trunk) = self.trunk.forward_cached(flat, true);
        let (vh_out, value_hidden) = self.value_hidden.forward_cached(trunk_out.clone(), true);
        let (v, value_out) = self.value_out.forward_cached(vh_out, false);
        let (ah_out, advantage_hidden) = self.advantage_hidden.forward_cached(trunk_out, true);
        let (adv, advantage_out) = self.advantage_out.forward_cached(ah_out, false);
        let q = dueling_combine(v[0], &adv);
        (
            q,
            ForwardCache {
                eigenvectors,
                gcn: gcn_caches,
                input_dense: dense_caches,
                trunk,
                value_hidden,
                value_out,
                advantage_hidden,
                advantage_out,
            },
        )
    }

    /// Accumulates `dL/dθ` into `grads` given `dL/dq` for the forward pass
    /// that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache, d_q: &Array1<f64>, grads: &mut QNetwork) {
        assert_eq!(d_q.len(), self.n_actions(), "upstream gradient has wrong length");
        assert!(self.same_architecture(grads), "gradient buffer has wrong architecture");
        let mean = d_q.mean().unwrap_or(0.0);
        let d_adv = d_q.mapv(|g| g - mean);
        let d_value = Array1::from_elem(1, d_q.sum());

        let d_ah = self
            .advantage_out
            .backward(&cache.advantage_out, &d_adv, false, &mut grads.advantage_out);
        let mut d_trunk =
            self.advantage_hidden
                .backward(&cache.advantage_hidden, &d_ah, true, &mut grads.advantage_hidden);
        let d_vh = self
            .value_out
            .backward(&cache.value_out, &d_value, false, &mut grads.value_out);
        d_trunk += &self
            .value_hidden
            .backward(&cache.value_hidden, &d_vh, true, &mut grads.value_hidden);
        let mut d_flat = self.trunk.backward(&cache.trunk, &d_trunk, true, &mut grads.trunk);

        match self.family {
            ModelFamily::Gcn => {
                let u = cache.eigenvectors.as_ref().expect("GCN cache holds the basis");
                let width = self.config.gcn_width;
                let mut d_x = d_flat
                    .into_shape_with_order((self.n_aps, width))
                    .expect("flattened GCN output");
                for (i, layer) in self.gcn.iter().enumerate().rev() {
                    d_x = layer.backward(u, &cache.gcn[i], &d_x, &mut grads.gcn[i]);
                }
            }
            ModelFamily::Mlp => {
                for (i, layer) in self.input_dense.iter().enumerate().rev() {
                    d_flat = layer.backward(&cache.input_dense[i], &d_flat, true, &mut grads.input_dense[i]);
                }
            }
        }
    }
}
