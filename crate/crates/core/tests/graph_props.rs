mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use selar_core::graph::{generate_synthetic, make_splits, EdgeTypeSpec, GeneratorConfig, NodeTypeSpec};
use selar_core::rng;
use selar_core::HeteroGraph;

/// Newman modularity of `labels` on the undirected union of all edge types.
fn modularity(g: &HeteroGraph, labels: &[usize]) -> f64 {
    let n = g.num_nodes();
    let mut adj = vec![vec![false; n]; n];
    for (u, _, v) in g.edges() {
        if u != v {
            adj[u][v] = true;
            adj[v][u] = true;
        }
    }
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().filter(|&&x| x).count() as f64).collect();
    let two_m: f64 = deg.iter().sum();
    let mut q = 0.0;
    for u in 0..n {
        for v in 0..n {
            if labels[u] == labels[v] {
                q += f64::from(u8::from(adj[u][v])) - deg[u] * deg[v] / two_m;
            }
        }
    }
    q / two_m
}

fn planted(seed: u64) -> (HeteroGraph, Vec<usize>) {
    let e = |name: &str, src: &str, dst: &str| EdgeTypeSpec {
        name: name.into(),
        src: src.into(),
        dst: dst.into(),
        density: None,
        within: Some(0.2),
        across: Some(0.01),
        mirror: None,
    };
    let cfg = GeneratorConfig {
        node_types: vec![
            NodeTypeSpec { name: "a".into(), count: 40 },
            NodeTypeSpec { name: "b".into(), count: 50 },
        ],
        communities: 3,
        edge_types: vec![e("ab", "a", "b"), e("bb", "b", "b")],
        features: None,
    };
    let s = generate_synthetic(&cfg, seed).unwrap();
    (s.graph, s.communities.unwrap())
}

#[test]
fn planted_communities_beat_shuffled_labels() {
    for seed in 0..10 {
        let (g, labels) = planted(seed);
        let q = modularity(&g, &labels);
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng::stream(seed, 3));
        let q_rand = modularity(&g, &shuffled);
        assert!(q > 0.3, "seed {seed}: planted modularity {q}");
        assert!(q > q_rand + 0.2, "seed {seed}: {q} vs shuffled {q_rand}");
    }
}

#[test]
fn generator_is_deterministic_per_seed() {
    let (a, la) = planted(4);
    let (b, lb) = planted(4);
    let (c, _) = planted(5);
    assert_eq!(a.edges(), b.edges());
    assert_eq!(la, lb);
    assert_ne!(a.edges(), c.edges());
}

#[test]
fn permutation_preserves_structure() {
    let g = common::random_graph(25, 0.2, 2, 3);
    let mut perm: Vec<usize> = (0..25).collect();
    perm.shuffle(&mut rng::stream(3, 4));
    let p = g.permuted(&perm).unwrap();
    assert_eq!(g.num_edges(), p.num_edges());
    for (u, t, v) in g.edges() {
        assert!(p.has_edge(t, perm[u], perm[v]));
    }
    for v in 0..25 {
        assert_eq!(g.degree(v), p.degree(perm[v]));
        assert_eq!(g.features(v), p.features(perm[v]));
    }
}

proptest! {
    #[test]
    fn splits_partition_items(n in 10usize..400, k in 1usize..6, seed in 0u64..1000) {
        let s = make_splits(n, (0.6, 0.2, 0.2), k, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(s.num_folds(), k);
        if k == 1 {
            let held = (s.train.len() as f64 / 3.0).round().max(1.0) as usize;
            prop_assert_eq!(s.meta_folds[0].len(), held);
        } else {
            let mut folded: Vec<usize> = s.meta_folds.concat();
            folded.sort_unstable();
            let mut train = s.train.clone();
            train.sort_unstable();
            prop_assert_eq!(folded, train);
            let sizes: Vec<usize> = s.meta_folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(&s, &make_splits(n, (0.6, 0.2, 0.2), k, seed).unwrap());
    }

    #[test]
    fn fold_plans_keep_meta_data_out_of_training(n in 10usize..300, k in 1usize..6, seed in 0u64..1000, rot in 0usize..20) {
        let s = make_splits(n, (0.6, 0.2, 0.2), k, seed).unwrap();
        let (train, meta) = s.fold_plan(rot);
        prop_assert!(!train.is_empty() && !meta.is_empty());
        prop_assert!(train.iter().all(|i| !meta.contains(i)));
        prop_assert_eq!(train.len() + meta.len(), s.train.len());
        prop_assert!(train.iter().chain(&meta).all(|i| s.train.contains(i)));
    }
}
