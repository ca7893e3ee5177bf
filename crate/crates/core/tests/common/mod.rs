//! Independent reference implementations shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chanalloc::canon::ColoredGraph;
use chanalloc::env::{CanonicalState, Env, EnvConfig};
use chanalloc::rl::{sap_payoffs, sap_select, PrioritizedReplayBuffer, Transition};
use chanalloc::throughput::ChannelMatrix;
use chanalloc::topology::Adjacency;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = a[row][col] / p;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Per-node fraction of time spent transmitting, from the balance
/// equations of the CSMA chain. States are sets of active nodes with no two
/// same-channel neighbors active; a node turns on at rate `rho` when none of
/// its same-channel neighbors is active and turns off at rate 1.
pub fn ctmc_throughput(adjacency: &Adjacency, channels: &ChannelMatrix, rho: f64) -> Vec<f64> {
    let n = adjacency.n();
    assert!(n <= 16);
    let conflicts = |i: usize, j: usize| adjacency.get(i, j) && channels.channel(i) == channels.channel(j);
    let feasible = |s: u32| {
        (0..n).all(|i| s & (1 << i) == 0 || (i + 1..n).all(|j| s & (1 << j) == 0 || !conflicts(i, j)))
    };
    let states: Vec<u32> = (0..1u32 << n).filter(|&s| feasible(s)).collect();
    let index = |s: u32| states.binary_search(&s).unwrap();
    let m = states.len();
    // Generator transposed: row = destination, so Qᵀ π = 0.
    let mut q = vec![vec![0.0; m]; m];
    for (from, &s) in states.iter().enumerate() {
        for i in 0..n {
            let bit = 1u32 << i;
            let (to, rate) = if s & bit != 0 {
                (s & !bit, 1.0)
            } else if (0..n).all(|j| s & (1 << j) == 0 || !conflicts(i, j)) {
                (s | bit, rho)
            } else {
                continue;
            };
            let t = index(to);
            q[t][from] += rate;
            q[from][from] -= rate;
        }
    }
    // Replace the last balance equation with normalization.
    q[m - 1] = vec![1.0; m];
    let mut rhs = vec![0.0; m];
    rhs[m - 1] = 1.0;
    let pi = solve_linear(q, rhs);
    (0..n)
        .map(|i| {
            states
                .iter()
                .zip(&pi)
                .filter(|(&s, _)| s & (1 << i) != 0)
                .map(|(_, p)| p)
                .sum()
        })
        .collect()
}

/// Number of connected components by union-find.
pub fn component_count(adjacency: &Adjacency) -> usize {
    let n = adjacency.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for i in 0..n {
        for j in adjacency.neighbors(i) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

pub fn is_connected(adjacency: &Adjacency) -> bool {
    component_count(adjacency) == 1
}

/// Calls `f` with every permutation of `0..n` (Heap's algorithm).
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize]) -> bool) -> bool {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    if f(&perm) {
        return true;
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            if f(&perm) {
                return true;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    false
}

/// Tries all `n!` relabelings `v -> perm[v]` of `g1` against `g2`.
pub fn brute_force_isomorphic(g1: &ColoredGraph, g2: &ColoredGraph) -> bool {
    let n = g1.n();
    if n != g2.n() {
        return false;
    }
    for_each_permutation(n, |perm| {
        (0..n).all(|v| g1.colors[v] == g2.colors[perm[v]])
            && (0..n).all(|u| (u + 1..n).all(|v| g1.adjacency.get(u, v) == g2.adjacency.get(perm[u], perm[v])))
    })
}

pub fn random_adjacency<R: Rng>(n: usize, p: f64, rng: &mut R) -> Adjacency {
    let mut a = Adjacency::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                a.set(i, j, true);
            }
        }
    }
    a
}

pub fn random_colored<R: Rng>(n: usize, m: usize, p: f64, rng: &mut R) -> ColoredGraph {
    let adjacency = random_adjacency(n, p, rng);
    let colors = (0..n).map(|_| rng.gen_range(0..m)).collect();
    ColoredGraph::new(adjacency, colors).unwrap()
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// All graphs on `n` labeled nodes, as adjacency matrices.
pub fn all_graphs(n: usize) -> impl Iterator<Item = Adjacency> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    (0..1u64 << pairs.len()).map(move |mask| {
        let edges: Vec<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &e)| e)
            .collect();
        Adjacency::from_edges(n, &edges).unwrap()
    })
}

/// Mean and standard error of a sample.
pub fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU, where the loss is not
    /// differentiable at the scale of `h`.
    pub skipped: usize,
    pub worst_relative_error: f64,
}

/// Checks `d(w·q)/dθ` for up to `per_tensor` random coordinates of every
/// parameter tensor.
pub fn gradient_check<R: Rng>(
    net: &chanalloc::nn::QNetwork,
    features: &chanalloc::env::StateFeatures,
    per_tensor: usize,
    h: f64,
    rng: &mut R,
) -> GradCheck {
    let n_out = net.n_actions();
    let w = ndarray::Array1::from_iter((0..n_out).map(|_| rng.gen_range(-1.0..1.0)));
    let (_, cache) = net.forward_cached(features);
    let pattern = cache.activation_pattern();
    let mut grads = net.zeros_like();
    net.backward(&cache, &w, &mut grads);
    let analytic: Vec<Vec<f64>> = grads.params().iter().map(|p| p.to_vec()).collect();
    let mut probe = net.clone();
    let mut out = GradCheck::default();
    for (block, values) in analytic.iter().enumerate() {
        let mut indices: Vec<usize> = (0..values.len()).collect();
        indices.shuffle(rng);
        indices.truncate(per_tensor);
        for idx in indices {
            let original = probe.params()[block][idx];
            probe.params_mut()[block][idx] = original + h;
            let (qp, cp) = probe.forward_cached(features);
            probe.params_mut()[block][idx] = original - h;
            let (qm, cm) = probe.forward_cached(features);
            probe.params_mut()[block][idx] = original;
            if cp.activation_pattern() != pattern || cm.activation_pattern() != pattern {
                out.skipped += 1;
                continue;
            }
            let numeric = (qp.dot(&w) - qm.dot(&w)) / (2.0 * h);
            let a = values[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            out.checked += 1;
            out.worst_relative_error = out.worst_relative_error.max(rel);
        }
    }
    out
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Large-sample KS rejection threshold at significance 0.001.
pub fn ks_critical_001(n: usize, m: usize) -> f64 {
    let c = (-(0.001f64 / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

pub fn sample_transition() -> Transition {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let s = env.reset(0).unwrap();
    let (next, reward) = env.step_flat(&s, 0).unwrap();
    Transition {
        state: s,
        action: 0,
        reward,
        next_state: next,
    }
}

/// Pearson statistic and its 0.999 quantile for the given expected
/// probabilities.
pub fn chi_square(counts: &[usize], probs: &[f64]) -> (f64, f64) {
    let total: usize = counts.iter().sum();
    let stat = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((counts.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    (stat, critical)
}

pub fn per_sampling_matches_priorities(exponent: f64) -> (f64, f64) {
    let t = sample_transition();
    let mut buf = PrioritizedReplayBuffer::new(10, exponent, 1e-3);
    for _ in 0..10 {
        buf.push(t.clone());
    }
    let deltas = [0.0, 0.05, 0.1, 0.3, 0.5, 0.8, 1.0, 1.5, 2.5, 4.0];
    buf.update(&(0..10).collect::<Vec<_>>(), &deltas);
    let expected: Vec<f64> = {
        let w: Vec<f64> = deltas.iter().map(|d| (d + 1e-3f64).powf(exponent)).collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    };
    for (p, e) in buf.probabilities().iter().zip(&expected) {
        assert!((p - e).abs() < 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = vec![0; 10];
    for _ in 0..100 {
        let (idx, _) = buf.sample(1000, &mut rng);
        for i in idx {
            counts[i] += 1;
        }
    }
    chi_square(&counts, &expected)
}

pub fn total_payoff(state: &CanonicalState) -> f64 {
    (0..state.n_aps())
        .map(|i| sap_payoffs(state, i)[state.graph.colors[i]])
        .sum()
}

/// Mean total payoff before and after 500 SAP steps on one fixed
/// topology, over 100 random initial assignments.
pub fn sap_payoff_improvement() -> (f64, f64) {
    let cfg = EnvConfig {
        resample_topology_each_episode: false,
        topology_seed: 0,
        episode_horizon: 500,
        ..EnvConfig::default()
    };
    let mut env = Env::new(cfg).unwrap();
    let (mut before, mut after) = (0.0, 0.0);
    for seed in 0..100 {
        let mut s = env.reset(seed).unwrap();
        before += total_payoff(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for _ in 0..500 {
            let a = sap_select(&s, 0.1, &mut rng);
            s = env.step_flat(&s, a).unwrap().0;
        }
        after += total_payoff(&s);
    }
    (before / 100.0, after / 100.0)
}

pub const CONFIG: &str = r#"
method = "gcn_sap"
seed = 7

[env]
reward_k = 2
episode_horizon = 5

[env.topology]
n_aps = 5
region_side = 1000.0
cs_range = 550.0
n_channels = 2

[agent]
batch_size = 8
eval_interval = 40
eval_episodes = 5
max_steps = 120
target_sync_interval = 30

[nn]
gcn_width = 8
dense_width = 16
stream_width = 8

[eval]
episodes = 20
horizon = 5
"#;

pub fn chanalloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chanalloc")).args(args).output().unwrap()
}

pub fn ok(args: &[&str]) -> Output {
    let out = chanalloc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn error_kind(out: &Output) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(v["message"].is_string());
    v["kind"].as_str().unwrap().to_string()
}

pub fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Runs every subcommand twice with identical inputs and compares CSV bytes.
/// Returns the number of artifact sets compared.
pub fn repeated_runs_are_byte_identical(root: &Path) -> usize {
    let config = root.join("config.toml");
    fs::write(&config, CONFIG).unwrap();
    let mut compared = 0;
    for round in ["a", "b"] {
        let r = root.join(round);
        ok(&["train", "--config", s(&config), "--out", s(&r.join("train"))]);
        ok(&["train", "--config", s(&config), "--method", "mlp_eps", "--out", s(&r.join("mlp"))]);
        ok(&[
            "eval",
            "--config",
            s(&config),
            "--checkpoint",
            s(&r.join("train/checkpoint.bin")),
            "--seed",
            "11",
            "--out",
            s(&r.join("eval")),
        ]);
        ok(&["baseline", "--config", s(&config), "--method", "random", "--out", s(&r.join("random"))]);
        ok(&["baseline", "--config", s(&config), "--method", "sap_only", "--out", s(&r.join("sap"))]);
        ok(&[
            "compare",
            s(&r.join("train")),
            s(&r.join("random")),
            s(&r.join("sap")),
            "--out",
            s(&r.join("cmp")),
        ]);
    }
    for sub in ["train", "mlp", "eval", "random", "sap", "cmp"] {
        let a = csvs(&root.join("a").join(sub));
        assert!(!a.is_empty(), "{sub} wrote no CSVs");
        assert_eq!(a, csvs(&root.join("b").join(sub)), "{sub} differs between runs");
        compared += 1;
    }
    compared
}
