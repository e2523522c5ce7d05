mod common;

use common::{away_from_zero, central_differences, max_rel_error, random_graph};
use rand::Rng;
use selar_core::gnn::{Encoder, EncoderConfig, EncoderKind};
use selar_core::graph::{FullNeighbors, NeighborSampler, SampledNeighbors};
use selar_core::rng;
use selar_core::tensor::{ParamSet, Tape, Tensor, Var};

const SEEDS: u64 = 20;
pub(crate) const TOL: f64 = 1e-5;
const H: f64 = 1e-6;

pub(crate) type OpFn = fn(&mut Tape, &[Var]) -> Var;

/// `Σ f(inputs) ⊙ R` for a fixed random `R`, so every output entry matters.
fn reduce(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let shape = tape.shape(out).to_vec();
    let mut r = rng::stream(seed, 77);
    let n: usize = shape.iter().product();
    let w = tape.constant(Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap());
    let p = tape.mul(out, w).unwrap();
    tape.sum(p).unwrap()
}

fn loss_value(f: OpFn, inputs: &[Tensor], seed: u64) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let l = reduce(&mut tape, out, seed);
    tape.value(l).item()
}

/// Max relative error of backward against central differences, and of the
/// forward tangent against the backward directional derivative.
pub(crate) fn check_op(f: OpFn, inputs: Vec<Tensor>, seed: u64) -> (f64, f64) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let l = reduce(&mut tape, out, seed);

    let mut r = rng::stream(seed, 78);
    let tangents: Vec<Tensor> = inputs
        .iter()
        .map(|t| Tensor::new(t.shape().to_vec(), (0..t.numel()).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let pairs: Vec<(Var, &Tensor)> = vars.iter().copied().zip(tangents.iter()).collect();
    let jvp = tape.jvp(&pairs, &[l]).unwrap()[0].item();

    let grads = tape.backward(l).unwrap();
    let mut analytic = Vec::new();
    let mut directional = 0.0;
    for (v, t) in vars.iter().zip(&tangents) {
        let g = grads.get(*v);
        directional += g.dot(t).unwrap();
        analytic.extend_from_slice(g.data());
    }

    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..inputs.len() {
        for k in 0..inputs[i].numel() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[k] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[k] -= H;
            numeric.push((loss_value(f, &plus, seed) - loss_value(f, &minus, seed)) / (2.0 * H));
        }
    }
    let jvp_err = (jvp - directional).abs() / directional.abs().max(1e-12);
    (max_rel_error(&analytic, &numeric), jvp_err)
}

fn positive(t: Tensor) -> Tensor {
    t.map(f64::abs)
}

/// Every differentiable op with its input shapes.
pub(crate) fn cases(r: &mut impl Rng) -> Vec<(&'static str, OpFn, Vec<Tensor>)> {
    let mut m = |a, b| away_from_zero(a, b, r);
    vec![
        ("matmul", (|t, v| t.matmul(v[0], v[1]).unwrap()) as OpFn, vec![m(3, 4), m(4, 2)]),
        ("add", |t, v| t.add(v[0], v[1]).unwrap(), vec![m(3, 4), m(3, 4)]),
        ("add_row_broadcast", |t, v| t.add(v[0], v[1]).unwrap(), vec![m(3, 4), m(1, 4)]),
        ("add_col_broadcast", |t, v| t.add(v[0], v[1]).unwrap(), vec![m(3, 4), m(3, 1)]),
        ("add_scalar", |t, v| t.add(v[0], v[1]).unwrap(), vec![m(3, 4), m(1, 1)]),
        ("sub", |t, v| t.sub(v[0], v[1]).unwrap(), vec![m(3, 4), m(1, 4)]),
        ("mul", |t, v| t.mul(v[0], v[1]).unwrap(), vec![m(3, 4), m(3, 4)]),
        ("mul_col_broadcast", |t, v| t.mul(v[0], v[1]).unwrap(), vec![m(3, 4), m(3, 1)]),
        ("affine", |t, v| t.affine(v[0], -1.7, 0.3).unwrap(), vec![m(3, 4)]),
        ("scale", |t, v| t.scale(v[0], 2.5).unwrap(), vec![m(3, 4)]),
        ("sigmoid", |t, v| t.sigmoid(v[0]).unwrap(), vec![m(3, 4)]),
        ("relu", |t, v| t.relu(v[0]).unwrap(), vec![m(3, 4)]),
        ("leaky_relu", |t, v| t.leaky_relu(v[0], 0.2).unwrap(), vec![m(3, 4)]),
        ("abs", |t, v| t.abs(v[0]).unwrap(), vec![m(3, 4)]),
        ("powf", |t, v| t.powf(v[0], 0.7).unwrap(), vec![positive(m(3, 4))]),
        ("softmax_rows", |t, v| t.softmax_rows(v[0]).unwrap(), vec![m(3, 4)]),
        (
            "segment_softmax",
            |t, v| t.segment_softmax(v[0], vec![0, 0, 1, 2, 2, 2]).unwrap(),
            vec![m(6, 1)],
        ),
        (
            "softmax_cross_entropy",
            |t, v| t.softmax_cross_entropy(v[0], vec![0, 3, 1]).unwrap(),
            vec![m(3, 4)],
        ),
        (
            "bce_with_logits",
            |t, v| t.bce_with_logits(v[0], vec![1.0, 0.0, 1.0, 0.0]).unwrap(),
            vec![m(4, 1)],
        ),
        ("gather_rows", |t, v| t.gather_rows(v[0], vec![2, 0, 2, 1]).unwrap(), vec![m(3, 4)]),
        (
            "scatter_add_rows",
            |t, v| t.scatter_add_rows(v[0], vec![1, 1, 0, 3], 5).unwrap(),
            vec![m(4, 3)],
        ),
        ("mean", |t, v| t.mean(v[0]).unwrap(), vec![m(3, 4)]),
        ("sum", |t, v| t.sum(v[0]).unwrap(), vec![m(3, 4)]),
        ("sum_cols", |t, v| t.sum_cols(v[0]).unwrap(), vec![m(3, 4)]),
        ("concat", |t, v| t.concat(&[v[0], v[1]]).unwrap(), vec![m(3, 2), m(3, 4)]),
        ("reshape", |t, v| t.reshape(v[0], 2, 6).unwrap(), vec![m(3, 4)]),
        ("linear", |t, v| t.linear(v[0], v[1], v[2]).unwrap(), vec![m(3, 4), m(4, 2), m(1, 2)]),
        (
            "composite",
            |t, v| {
                let h = t.linear(v[0], v[1], v[2]).unwrap();
                let h = t.sigmoid(h).unwrap();
                let s = t.softmax_rows(h).unwrap();
                t.mul(s, h).unwrap()
            },
            vec![m(5, 3), m(3, 4), m(1, 4)],
        ),
    ]
}

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..SEEDS {
        let mut r = rng::stream(seed, 1);
        for (name, f, inputs) in cases(&mut r) {
            let (err, jvp_err) = check_op(f, inputs, seed);
            assert!(err < TOL, "{name} seed {seed}: backward rel error {err:e}");
            assert!(jvp_err < 1e-9, "{name} seed {seed}: jvp disagrees with backward by {jvp_err:e}");
        }
    }
}

fn encoder_loss(enc: &Encoder, p: &ParamSet, g: &selar_core::HeteroGraph, batch: &[usize], s: &dyn NeighborSampler, seed: u64) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let vars = p.register(&mut tape);
    let z = enc.encode(&mut tape, &vars, g, batch, s).unwrap().z;
    let l = reduce(&mut tape, z, seed);
    let value = tape.value(l).item();
    let grads = tape.backward(l).unwrap();
    (value, grads.collect(&vars).iter().flat_map(|t| t.data().to_vec()).collect())
}

fn check_encoder(kind: EncoderKind, featureless: bool) {
    for seed in 0..SEEDS {
        let mut r = rng::stream(seed, 2);
        let n = r.random_range(12..=32);
        let g = random_graph(n, 0.12, if featureless { 0 } else { 5 }, seed);
        let mut cfg = EncoderConfig::new(kind);
        cfg.hidden_dim = 8;
        cfg.out_dim = 6;
        cfg.type_embedding_dim = 4;
        cfg.gin_eps = 0.1;
        let enc = Encoder::new(&cfg, &g).unwrap();
        // zero-initialised biases would sit exactly on ReLU kinks
        let mut params = enc.init_params(&mut r);
        for (k, x) in params.flatten().into_iter().enumerate() {
            params.set_flat(k, x + r.random_range(-0.1..0.1));
        }
        let batch: Vec<usize> = (0..6).map(|_| r.random_range(0..n)).collect();
        let sampler: Box<dyn NeighborSampler> = if seed % 2 == 0 {
            Box::new(FullNeighbors)
        } else {
            Box::new(SampledNeighbors { size: 4, seed })
        };
        let (_, analytic) = encoder_loss(&enc, &params, &g, &batch, sampler.as_ref(), seed);
        let numeric = central_differences(&params, H, |q| encoder_loss(&enc, q, &g, &batch, sampler.as_ref(), seed).0);
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < TOL, "{kind:?} featureless={featureless} seed {seed}: rel error {err:e}");
    }
}

#[test]
fn gcn_encoder_gradients() {
    check_encoder(EncoderKind::Gcn, false);
}

#[test]
fn sgc_encoder_gradients() {
    check_encoder(EncoderKind::Sgc, false);
}

#[test]
fn gin_encoder_gradients() {
    check_encoder(EncoderKind::Gin, false);
}

#[test]
fn gat_encoder_gradients() {
    check_encoder(EncoderKind::Gat, false);
}

#[test]
fn featureless_encoders_train_type_embeddings() {
    for kind in [EncoderKind::Gcn, EncoderKind::Gat] {
        check_encoder(kind, true);
    }
}

