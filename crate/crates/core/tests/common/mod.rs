#![allow(dead_code)]

use rand::Rng;
use selar_core::gnn::PairScorer;
use selar_core::graph::FullNeighbors;
use selar_core::rng;
use selar_core::selar::{
    meta_loss, train_gradient, HintNet, Learner, TaskBatch, Weighting, WeightingNet,
};
use selar_core::tasks::{Example, HeadKind, TaskKind, TaskSpec};
use selar_core::tensor::{sgd_virtual_step, ParamSet, Tensor};

pub const NODES: usize = 12;

pub fn toy_specs() -> Vec<TaskSpec> {
    vec![
        TaskSpec::new(0, "primary", TaskKind::Primary, HeadKind::PairBinary, 2).unwrap(),
        TaskSpec::new(1, "cls", TaskKind::Degree, HeadKind::NodeMulticlass, 3).unwrap(),
        TaskSpec::new(2, "pair", TaskKind::Metapath, HeadKind::PairBinary, 2).unwrap(),
    ]
}

/// Two-layer perceptron on a random 12 x 3 feature table.
pub fn toy_learner(seed: u64) -> Learner<'static> {
    let mut r = rng::stream(seed, 100);
    let data = (0..NODES * 3).map(|_| r.random_range(-1.0..1.0)).collect();
    let features = Tensor::matrix(NODES, 3, data).unwrap();
    Learner::mlp(features, 6, 4, &toy_specs(), PairScorer::Dot).unwrap()
}

fn pair(r: &mut impl Rng) -> Example {
    let u = r.random_range(0..NODES);
    let v = (u + r.random_range(1..NODES)) % NODES;
    Example::pair(u, v, r.random_range(0..2))
}

/// 8 training examples over three tasks and 8 primary meta examples.
pub fn toy_batches(seed: u64) -> (Vec<TaskBatch>, TaskBatch) {
    let mut r = rng::stream(seed, 101);
    let train = vec![
        TaskBatch { task: 0, examples: (0..3).map(|_| pair(&mut r)).collect() },
        TaskBatch {
            task: 1,
            examples: (0..3).map(|_| Example::node(r.random_range(0..NODES), r.random_range(0..3))).collect(),
        },
        TaskBatch { task: 2, examples: (0..2).map(|_| pair(&mut r)).collect() },
    ];
    let meta = TaskBatch { task: 0, examples: (0..8).map(|_| pair(&mut r)).collect() };
    (train, meta)
}

/// Weighting net with every parameter randomised (no zero output layer).
pub fn random_vnet(seed: u64) -> (WeightingNet, ParamSet) {
    let v = WeightingNet::learned(3, 2, 6);
    let p = v.init_params("v", &mut rng::stream(seed, 102));
    let mut r = rng::stream(seed, 103);
    let t = p
        .tensors()
        .iter()
        .map(|t| {
            let d = t.data().iter().map(|_| r.random_range(-0.8..0.8)).collect();
            Tensor::new(t.shape().to_vec(), d).unwrap()
        })
        .collect();
    (v.clone(), p.with_tensors(t).unwrap())
}

pub fn random_hint(seed: u64, learned: bool) -> (HintNet, ParamSet) {
    let vnet = if learned { WeightingNet::learned(3, 2, 5) } else { WeightingNet::fixed(3, 1.0) };
    let h = HintNet::new(vnet, &toy_specs(), 4, 0.5).unwrap();
    let p = h.init_params(&mut rng::stream(seed, 104));
    let mut r = rng::stream(seed, 105);
    let t = p
        .tensors()
        .iter()
        .map(|t| {
            let d = t.data().iter().map(|x| x + r.random_range(-0.5..0.5)).collect();
            Tensor::new(t.shape().to_vec(), d).unwrap()
        })
        .collect();
    (h.clone(), p.with_tensors(t).unwrap())
}

/// `L_meta(w - α ∇_w L_train(w))` evaluated directly.
pub fn unrolled_objective(
    learner: &Learner<'_>,
    w: &ParamSet,
    weighting: Weighting<'_>,
    train: &[TaskBatch],
    meta: &TaskBatch,
    lr_inner: f64,
) -> f64 {
    let (_, g) = train_gradient(learner, w, train, &FullNeighbors, weighting).unwrap();
    let w2 = w.with_tensors(sgd_virtual_step(w.tensors(), &g, lr_inner).unwrap()).unwrap();
    meta_loss(learner, &w2, meta, &FullNeighbors).unwrap().0
}

/// Central differences of `f` over every entry of `p`.
pub fn central_differences(p: &ParamSet, h: f64, mut f: impl FnMut(&ParamSet) -> f64) -> Vec<f64> {
    let base = p.flatten();
    let mut out = Vec::with_capacity(base.len());
    let mut q = p.clone();
    for k in 0..base.len() {
        q.set_flat(k, base[k] + h);
        let plus = f(&q);
        q.set_flat(k, base[k] - h);
        let minus = f(&q);
        q.set_flat(k, base[k]);
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Largest entrywise error relative to the larger magnitude, with a floor
/// tied to the overall gradient scale so exact zeros do not dominate.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let floor = 1e-3 * scale + 1e-12;
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn flat(ts: &[Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

/// Random two-type, two-relation graph; `feature_dim == 0` leaves it featureless.
pub fn random_graph(n: usize, p: f64, feature_dim: usize, seed: u64) -> selar_core::HeteroGraph {
    let mut r = rng::stream(seed, 99);
    let node_type: Vec<usize> = (0..n).map(|v| v % 2).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && r.random::<f64>() < p {
                edges.push((u, usize::from(node_type[u] != node_type[v]), v));
            }
        }
    }
    let features = (feature_dim > 0).then(|| {
        (0..n)
            .map(|_| (0..feature_dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect()
    });
    selar_core::HeteroGraph::new(
        node_type,
        vec!["a".into(), "b".into()],
        features,
        vec!["same".into(), "cross".into()],
        &edges,
    )
    .unwrap()
}

/// Random tensor with entries of magnitude in `[0.1, 1.5]`, away from kinks at 0.
pub fn away_from_zero(rows: usize, cols: usize, r: &mut impl Rng) -> Tensor {
    Tensor::new(
        vec![rows, cols],
        (0..rows * cols)
            .map(|_| {
                let m = r.random_range(0.1..1.5);
                if r.random::<bool>() {
                    m
                } else {
                    -m
                }
            })
            .collect(),
    )
    .unwrap()
}
