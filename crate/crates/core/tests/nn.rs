mod common;

use chanalloc::env::{Env, EnvConfig, StateFeatures};
use chanalloc::nn::{gcn_forward, load_network, save_network, GcnLayer, ModelFamily, NnConfig, QNetwork};
use chanalloc::topology::laplacian_decompose;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn full_gcn_network_gradients_match_central_differences() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let net = QNetwork::new(ModelFamily::Gcn, 10, 3, &NnConfig::default(), 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut total = common::GradCheck::default();
    for seed in 0..10 {
        let s = env.reset(seed).unwrap();
        let r = common::gradient_check(&net, s.features(), 50, 1e-5, &mut rng);
        total.checked += r.checked;
        total.skipped += r.skipped;
        total.worst_relative_error = total.worst_relative_error.max(r.worst_relative_error);
    }
    println!("{total:?}");
    assert!(total.worst_relative_error < 1e-4);
    assert!(total.skipped * 20 < total.checked);
}

#[test]
fn full_mlp_network_gradients_match_central_differences() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let net = QNetwork::new(ModelFamily::Mlp, 10, 3, &NnConfig::default(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..3 {
        let s = env.reset(seed).unwrap();
        let r = common::gradient_check(&net, s.features(), 30, 1e-5, &mut rng);
        assert!(r.worst_relative_error < 1e-4, "{r:?}");
    }
}

fn distinct_eigenvalues(d: &chanalloc::topology::LaplacianDecomposition) -> bool {
    d.eigenvalues.windows(2).into_iter().all(|w| w[1] - w[0] > 1e-6)
}

#[test]
fn gcn_layer_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tested = 0;
    while tested < 50 {
        let n = rng.gen_range(3..=10);
        let adj = common::random_adjacency(n, 0.5, &mut rng);
        let d = laplacian_decompose(&adj).unwrap();
        if !distinct_eigenvalues(&d) {
            continue;
        }
        let layer = GcnLayer::init(n, 3, 5, &mut rng);
        let mut layer = layer;
        layer.spectral_coeffs.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let perm = common::random_permutation(n, &mut rng);
        let mut px = Array2::zeros((n, 3));
        for v in 0..n {
            px.row_mut(perm[v]).assign(&x.row(v));
        }
        let dp = laplacian_decompose(&adj.permuted(&perm)).unwrap();
        let y = gcn_forward(&d, &x, &layer);
        let py = gcn_forward(&dp, &px, &layer);
        for v in 0..n {
            for k in 0..5 {
                assert!((y[[v, k]] - py[[perm[v], k]]).abs() < 1e-9);
            }
        }
        tested += 1;
    }
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    for family in [ModelFamily::Gcn, ModelFamily::Mlp] {
        let net = QNetwork::new(family, 10, 3, &NnConfig::default(), 21);
        let back = load_network(&save_network(&net)).unwrap();
        assert_eq!(back, net);
        for seed in 0..5 {
            let s = env.reset(seed).unwrap();
            assert_eq!(back.forward(s.features()), net.forward(s.features()));
        }
    }
}

#[test]
fn forward_depends_only_on_canonical_state() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let net = QNetwork::new(ModelFamily::Gcn, 10, 3, &NnConfig::default(), 2);
    let s = env.reset(8).unwrap();
    let recomputed = StateFeatures::compute(&s.graph, 3).unwrap();
    assert_eq!(net.forward(&recomputed), net.forward(s.features()));
}
