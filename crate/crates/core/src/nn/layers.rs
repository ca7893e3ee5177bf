use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::topology::LaplacianDecomposition;

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn relu_mask(h: &Array2<f64>) -> Array2<f64> {
    h.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-limit..=limit))
}

/// Fully connected layer `h = x W + b`, with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct DenseCache {
    pub input: Array1<f64>,
    pub pre_activation: Array1<f64>,
}

impl Dense {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weights: Array2::zeros((d_in, d_out)),
            bias: Array1::zeros(d_out),
        }
    }

    pub fn glorot<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            weights: glorot(rng, d_in, d_out),
            bias: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn pre_activation(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.d_in(), "dense input width mismatch");
        // Row-wise accumulation keeps memory access contiguous; zero inputs
        // (common after a ReLU) are skipped.
        let mut h = self.bias.clone();
        for (&xi, row) in x.iter().zip(self.weights.rows()) {
            if xi != 0.0 {
                h.scaled_add(xi, &row);
            }
        }
        h
    }

    pub(crate) fn forward_cached(&self, x: Array1<f64>, relu_out: bool) -> (Array1<f64>, DenseCache) {
        let h = self.pre_activation(x.view());
        let out = if relu_out { h.mapv(relu) } else { h.clone() };
        (
            out,
            DenseCache {
                input: x,
                pre_activation: h,
            },
        )
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub(crate) fn backward(
        &self,
        cache: &DenseCache,
        d_out: &Array1<f64>,
        relu_out: bool,
        grads: &mut Dense,
    ) -> Array1<f64> {
        let dh = if relu_out {
            d_out * &cache.pre_activation.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
        } else {
            d_out.clone()
        };
        for (&xi, mut row) in cache.input.iter().zip(grads.weights.rows_mut()) {
            if xi != 0.0 {
                row.scaled_add(xi, &dh);
            }
        }
        grads.bias += &dh;
        self.weights.dot(&dh)
    }
}

/// Spectral graph convolution applied per input dimension, followed by a
/// 1x1 mixing across dimensions.
///
/// For input column `x_j`: `y_j = U (θ_j ⊙ (Uᵀ x_j))`. The filtered
/// signals are then mixed as `Y W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    /// Row `j` holds the spectral coefficients `θ_j` for input dimension `j`.
    pub spectral_coeffs: Array2<f64>,
    /// `d_in x d_out`.
    pub mix_weights: Array2<f64>,
    pub mix_bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct GcnCache {
    pub spectral: Array2<f64>,
    pub filtered: Array2<f64>,
    pub pre_activation: Array2<f64>,
}

impl GcnLayer {
    pub fn zeros(n_nodes: usize, d_in: usize, d_out: usize) -> Self {
        Self {
            spectral_coeffs: Array2::zeros((d_in, n_nodes)),
            mix_weights: Array2::zeros((d_in, d_out)),
            mix_bias: Array1::zeros(d_out),
        }
    }

    /// Identity filters with ±0.01 jitter, Glorot mixing, zero bias.
    pub fn init<R: Rng>(n_nodes: usize, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            spectral_coeffs: Array2::from_shape_fn((d_in, n_nodes), |_| {
                1.0 + rng.gen_range(-0.01..=0.01)
            }),
            mix_weights: glorot(rng, d_in, d_out),
            mix_bias: Array1::zeros(d_out),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.spectral_coeffs.ncols()
    }

    pub fn d_in(&self) -> usize {
        self.spectral_coeffs.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.mix_weights.ncols()
    }

    /// Per-dimension spectral filtering `U (θ_j ⊙ Uᵀ x_j)`, before mixing.
    pub fn filter(&self, eigenvectors: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
        self.filter_parts(eigenvectors, x).1
    }

    fn filter_parts(&self, u: &Array2<f64>, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        assert_eq!(x.nrows(), self.n_nodes(), "GCN input has wrong node count");
        assert_eq!(x.ncols(), self.d_in(), "GCN input has wrong feature width");
        assert_eq!(u.nrows(), self.n_nodes(), "eigenvector basis has wrong size");
        let spectral = u.t().dot(x);
        let scaled = &spectral * &self.spectral_coeffs.t();
        (spectral, u.dot(&scaled))
    }

    /// Mixed output before the ReLU.
    pub fn pre_activation(&self, eigenvectors: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
        self.filter(eigenvectors, x).dot(&self.mix_weights) + &self.mix_bias
    }

    pub(crate) fn forward_cached(&self, u: &Array2<f64>, x: &Array2<f64>) -> (Array2<f64>, GcnCache) {
        let (spectral, filtered) = self.filter_parts(u, x);
        let h = filtered.dot(&self.mix_weights) + &self.mix_bias;
        let out = h.mapv(relu);
        (
            out,
            GcnCache {
                spectral,
                filtered,
                pre_activation: h,
            },
        )
    }

    /// Accumulates parameter gradients and returns `dL/dx`. The basis `u` is
    /// a constant of the input graph.
    pub(crate) fn backward(
        &self,
        u: &Array2<f64>,
        cache: &GcnCache,
        d_out: &Array2<f64>,
        grads: &mut GcnLayer,
    ) -> Array2<f64> {
        let dh = d_out * &relu_mask(&cache.pre_activation);
        grads.mix_weights += &cache.filtered.t().dot(&dh);
        grads.mix_bias += &dh.sum_axis(Axis(0));
        let d_filtered = dh.dot(&self.mix_weights.t());
        let d_scaled = u.t().dot(&d_filtered);
        grads.spectral_coeffs += &(&d_scaled * &cache.spectral).t();
        let d_spectral = &d_scaled * &self.spectral_coeffs.t();
        u.dot(&d_spectral)
    }
}

/// One GCN layer including the ReLU: `relu(U(θ ⊙ Uᵀx) W + b)`.
pub fn gcn_forward(decomp: &LaplacianDecomposition, x: &Array2<f64>, layer: &GcnLayer) -> Array2<f64> {
    layer.pre_activation(&decomp.eigenvectors, x).mapv(relu)
}
