use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for bias-corrected Adam, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(block_sizes: impl IntoIterator<Item = usize>, config: AdamConfig) -> Self {
        let first_moment: Vec<Vec<f64>> = block_sizes.into_iter().map(|n| vec![0.0; n]).collect();
        Self {
            config,
            second_moment: first_moment.clone(),
            first_moment,
            step_count: 0,
        }
    }
}

/// One Adam update over matching parameter and gradient blocks.
pub fn adam_step(params: Vec<&mut [f64]>, grads: Vec<&[f64]>, state: &mut AdamState) {
    assert_eq!(params.len(), grads.len(), "parameter/gradient block count mismatch");
    assert_eq!(params.len(), state.first_moment.len(), "optimizer state block count mismatch");
    state.step_count += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step_count as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .into_iter()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        assert_eq!(p.len(), g.len(), "parameter/gradient shape mismatch");
        assert_eq!(p.len(), m.len(), "optimizer state shape mismatch");
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
