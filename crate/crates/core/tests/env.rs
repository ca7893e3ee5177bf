mod common;

use chanalloc::env::{decode_action, encode_action, Env, EnvConfig};
use chanalloc::throughput::{csma_throughput, reward, ChannelMatrix};
use chanalloc::topology::{generate_topology, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn relabel(topo: &Topology, channels: &ChannelMatrix, perm: &[usize]) -> (Topology, ChannelMatrix) {
    let n = perm.len();
    let mut positions = vec![[0.0; 2]; n];
    let mut moved = vec![0; n];
    for v in 0..n {
        positions[perm[v]] = topo.positions[v];
        moved[perm[v]] = channels.channel(v);
    }
    (
        Topology {
            positions,
            adjacency: topo.adjacency.permuted(perm),
        },
        ChannelMatrix::new(moved, channels.n_channels()).unwrap(),
    )
}

#[test]
fn relabeled_configurations_map_to_one_state() {
    let env = Env::new(EnvConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for seed in 0..100 {
        let topo = generate_topology(&env.config().topology, seed);
        let ch = ChannelMatrix::new((0..10).map(|_| rng.gen_range(0..3)).collect(), 3).unwrap();
        let s = env.state_from_physical(&topo, &ch).unwrap();
        for _ in 0..10 {
            let perm = common::random_permutation(10, &mut rng);
            let (t2, c2) = relabel(&topo, &ch, &perm);
            let s2 = env.state_from_physical(&t2, &c2).unwrap();
            assert_eq!(s2.canonical_bytes(), s.canonical_bytes());
            assert_eq!(s2.graph, s.graph);
            assert_eq!(s2.reward(), s.reward());
            assert_eq!(s2.throughputs(), s.throughputs());
        }
    }
}

#[test]
fn state_reward_matches_physical_throughput() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    for seed in 0..200 {
        let s = env.reset(seed).unwrap();
        let topo = env.topology().unwrap().clone();
        let physical = csma_throughput(&topo.adjacency, &s.physical_channels(), 10.0).unwrap();
        for p in 0..10 {
            assert!((physical.values()[p] - s.throughputs().values()[s.perm[p]]).abs() < 1e-12);
        }
        assert!((reward(&physical, 4) - s.reward()).abs() < 1e-12);
        assert_eq!(topo.adjacency.permuted(&s.perm), s.graph.adjacency);
    }
}

#[test]
fn step_changes_one_physical_ap_and_tracks_labels() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..50 {
        let mut s = env.reset(seed).unwrap();
        let topo = env.topology().unwrap().clone();
        for _ in 0..20 {
            let a = rng.gen_range(0..30);
            let action = decode_action(a, 3);
            assert_eq!(encode_action(action.ap, action.channel, 3), a);
            let physical_ap = s.inverse_perm()[action.ap];
            let mut expected = s.physical_channels();
            expected.set_channel(physical_ap, action.channel);
            let (next, r) = env.step_flat(&s, a).unwrap();
            assert_eq!(next.physical_channels(), expected);
            assert_eq!(next.step_index, s.step_index + 1);
            let direct = env.state_from_physical(&topo, &expected).unwrap();
            assert_eq!(direct.canonical_bytes(), next.canonical_bytes());
            assert_eq!(r, direct.reward());
            s = next;
        }
    }
}

#[test]
fn step_is_pure() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let s = env.reset(5).unwrap();
    for a in 0..30 {
        let (x, rx) = env.step_flat(&s, a).unwrap();
        let (y, ry) = env.step_flat(&s, a).unwrap();
        assert_eq!(x.canonical_bytes(), y.canonical_bytes());
        assert_eq!(x.perm, y.perm);
        assert_eq!(rx, ry);
    }
}

#[test]
fn reset_is_seed_deterministic_and_fixed_topology_is_reused() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let a = env.reset(9).unwrap();
    let b = env.reset(9).unwrap();
    assert_eq!(a.canonical_bytes(), b.canonical_bytes());

    let cfg = EnvConfig {
        resample_topology_each_episode: false,
        topology_seed: 3,
        ..EnvConfig::default()
    };
    let mut fixed = Env::new(cfg).unwrap();
    fixed.reset(1).unwrap();
    let first = fixed.topology().unwrap().clone();
    fixed.reset(2).unwrap();
    assert_eq!(fixed.topology().unwrap(), &first);
}
