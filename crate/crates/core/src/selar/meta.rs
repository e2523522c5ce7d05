//! Weighted training loss and the one-step-lookahead meta-gradient.
//!
//! With `w' = w - α ∇_w Σ_t mean_i V_i ℓ_i`, the gradient of the meta loss
//! `L(w')` with respect to the weighting parameters is
//!
//! ```text
//! ∇_Θ L(w') = -α Σ_i a_i (g_meta · ∇_w ℓ_i) ∇_Θ V_i,    a_i = 1 / n_task(i)
//! ```
//!
//! where `g_meta = ∇_w L` at `w'`. Writing `ℓ_i = ℓ(s_i)` with logits `s_i`,
//! `g_meta · ∇_w ℓ_i = ℓ'(s_i) · (J_i g_meta)`, and the Jacobian-vector
//! products `J_i g_meta` for a whole batch come from one forward tangent
//! sweep over the training tape. Only first-order derivatives are needed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NeighborSampler;
use crate::tasks::HeadKind;
use crate::tensor::{sgd_virtual_step, ParamSet, Tape, Tensor, Var};

use super::learner::{example_losses, Learner, TaskBatch, TaskOutput};
use super::weighting::{HintNet, WeightingNet, Xi};

/// The weighting function and, optionally, the hint network with their
/// current parameters.
#[derive(Clone, Copy, Debug)]
pub struct Weighting<'a> {
    pub vnet: &'a WeightingNet,
    pub theta: &'a ParamSet,
    pub hint: Option<(&'a HintNet, &'a ParamSet)>,
}

/// How the per-example products `J_i g_meta` are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// One forward tangent sweep over the batched training tape.
    #[default]
    Forward,
    /// One reverse sweep per example and output column.
    PerExample,
}

/// Recorded weighted training loss at `w`.
pub struct TrainPass {
    pub tape: Tape,
    pub w: Vec<Var>,
    pub outputs: Vec<TaskOutput>,
    /// Logits after hint mixing (the learner logits when not mixed).
    pub mixed: Vec<Var>,
    /// Mixing coefficients per example, `None` when the task is not mixed.
    pub mix: Vec<Option<Vec<f64>>>,
    pub xi: Vec<Vec<Xi>>,
    pub weights: Vec<Vec<f64>>,
    pub losses: Vec<Vec<f64>>,
    /// `mean_i V_i ℓ_i` per batch.
    pub task_means: Vec<f64>,
    pub total: Var,
}

impl TrainPass {
    pub fn total_value(&self) -> f64 {
        self.tape.value(self.total).item()
    }
}

fn sign_of(kind: HeadKind, label: usize) -> f64 {
    match kind {
        HeadKind::PairBinary => label as f64,
        _ => 1.0,
    }
}

/// Forward pass of `Σ_t mean_i V(ξ_i) ℓ_i` with `w` as differentiable leaves.
pub fn train_pass(
    learner: &Learner<'_>,
    w: &ParamSet,
    batches: &[TaskBatch],
    sampler: &dyn NeighborSampler,
    weighting: Weighting<'_>,
) -> Result<TrainPass> {
    if batches.is_empty() || batches[0].task != 0 {
        return Err(Error::invalid("training batches must start with the primary task"));
    }
    let mut tape = Tape::new();
    let wv = w.register(&mut tape);
    let outputs = learner.forward(&mut tape, &wv, batches, sampler)?;
    let hint_vars = weighting.hint.map(|(_, p)| p.register_constant(&mut tape));

    let mut mixed = Vec::new();
    let mut mix = Vec::new();
    let mut xis = Vec::new();
    let mut weights = Vec::new();
    let mut losses = Vec::new();
    let mut task_means = Vec::new();
    let mut total: Option<Var> = None;
    for (b, out) in batches.iter().zip(&outputs) {
        let kind = learner.head_kind(b.task);
        let labels = b.labels();
        let raw = example_losses(&mut tape, kind, out.logits, &labels)?;
        let xi: Vec<Xi> = b
            .examples
            .iter()
            .zip(tape.value(raw).data())
            .map(|(e, &loss)| Xi {
                loss,
                task: b.task,
                sign: sign_of(kind, e.label),
            })
            .collect();
        let (s, loss, m) = match (weighting.hint, &hint_vars) {
            (Some((hint, _)), Some(hv)) if hint.applies_to(b.task) => {
                let m = hint.coefficient(&mut tape, hv, &xi)?;
                let h = hint.logits(&mut tape, hv, b.task, &out.zu, out.zv.as_ref())?;
                let m_values = tape.value(m).data().to_vec();
                let m = tape.constant(tape.value(m).clone());
                let h = tape.constant(tape.value(h).clone());
                let s = HintNet::mix(&mut tape, m, out.logits, h)?;
                let loss = example_losses(&mut tape, kind, s, &labels)?;
                (s, loss, Some(m_values))
            }
            _ => (out.logits, raw, None),
        };
        let v = weighting.vnet.weights(weighting.theta, &xi)?;
        let vc = tape.constant(Tensor::column(v.clone()));
        let weighted = tape.mul(loss, vc)?;
        let mean = tape.mean(weighted)?;
        task_means.push(tape.value(mean).item());
        losses.push(tape.value(loss).data().to_vec());
        total = Some(match total {
            None => mean,
            Some(t) => tape.add(t, mean)?,
        });
        mixed.push(s);
        mix.push(m);
        xis.push(xi);
        weights.push(v);
    }
    Ok(TrainPass {
        tape,
        w: wv,
        outputs,
        mixed,
        mix,
        xi: xis,
        weights,
        losses,
        task_means,
        total: total.expect("at least one batch"),
    })
}

/// Value of the weighted training loss.
pub fn weighted_train_loss(
    learner: &Learner<'_>,
    w: &ParamSet,
    batches: &[TaskBatch],
    sampler: &dyn NeighborSampler,
    weighting: Weighting<'_>,
) -> Result<f64> {
    Ok(train_pass(learner, w, batches, sampler, weighting)?.total_value())
}

/// Gradient of the weighted training loss with respect to `w`.
pub fn train_gradient(
    learner: &Learner<'_>,
    w: &ParamSet,
    batches: &[TaskBatch],
    sampler: &dyn NeighborSampler,
    weighting: Weighting<'_>,
) -> Result<(TrainPass, Vec<Tensor>)> {
    let mut pass = train_pass(learner, w, batches, sampler, weighting)?;
    let total = pass.total;
    let grads = pass.tape.backward(total)?;
    let g = grads.collect(&pass.w);
    Ok((pass, g))
}

/// Mean primary loss of `meta` at `w` and its gradient.
pub fn meta_loss(
    learner: &Learner<'_>,
    w: &ParamSet,
    meta: &TaskBatch,
    sampler: &dyn NeighborSampler,
) -> Result<(f64, Vec<Tensor>)> {
    if meta.task != 0 {
        return Err(Error::invalid("meta batch must hold primary-task examples"));
    }
    if meta.examples.is_empty() {
        return Err(Error::invalid("meta batch is empty"));
    }
    let mut tape = Tape::new();
    let wv = w.register(&mut tape);
    let out = learner.forward(&mut tape, &wv, std::slice::from_ref(meta), sampler)?;
    let l = example_losses(&mut tape, learner.head_kind(0), out[0].logits, &meta.labels())?;
    let l = tape.mean(l)?;
    let value = tape.value(l).item();
    let g = tape.backward(l)?.collect(&wv);
    Ok((value, g))
}

pub struct MetaGradient {
    /// `∇_Θ L(w'(Θ))`, one tensor per weighting-net parameter.
    pub theta: Vec<Tensor>,
    /// Same for the hint network parameters (empty without hints).
    pub theta_h: Vec<Tensor>,
    /// Meta loss at the virtual parameters `w'`.
    pub meta_loss: f64,
    /// `k_i` such that `∇_Θ = Σ_i k_i ∇_Θ V_i`, per batch.
    pub coefficients: Vec<Vec<f64>>,
    pub pass: TrainPass,
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `∂ℓ/∂s` per row.
fn loss_derivative(kind: HeadKind, s: &Tensor, labels: &[usize]) -> Tensor {
    let mut d = s.clone();
    let c = s.cols();
    for (i, &y) in labels.iter().enumerate() {
        let row = &mut d.data_mut()[i * c..(i + 1) * c];
        match kind {
            HeadKind::PairBinary => row[0] = stable_sigmoid(row[0]) - y as f64,
            _ => {
                let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - mx).exp();
                    z += *x;
                }
                for x in row.iter_mut() {
                    *x /= z;
                }
                row[y] -= 1.0;
            }
        }
    }
    d
}

fn dot(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y).expect("matching shapes")).sum()
}

/// `J g_meta` for every example of every batch, one reverse sweep per
/// example and output column.
fn per_example_products(
    learner: &Learner<'_>,
    w: &ParamSet,
    batches: &[TaskBatch],
    sampler: &dyn NeighborSampler,
    g_meta: &[Tensor],
) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(batches.len());
    for b in batches {
        let cols = learner.heads()[b.task].output_dim();
        let mut u = Tensor::zeros(b.examples.len(), cols);
        for (i, e) in b.examples.iter().enumerate() {
            let single = [TaskBatch {
                task: b.task,
                examples: vec![*e],
            }];
            for c in 0..cols {
                let mut tape = Tape::new();
                let wv = w.register(&mut tape);
                let o = learner.forward(&mut tape, &wv, &single, sampler)?;
                let mut seed = Tensor::zeros(1, cols);
                seed.set(0, c, 1.0);
                let g = tape.backward_seeded(o[0].logits, seed)?.collect(&wv);
                u.set(i, c, dot(&g, g_meta));
            }
        }
        out.push(u);
    }
    Ok(out)
}

/// Analytic `∇_Θ L_meta(w'(Θ))` (and `∇_{Θ_H}` when hints are active).
#[allow(clippy::too_many_arguments)]
pub fn meta_gradient(
    learner: &Learner<'_>,
    w: &ParamSet,
    weighting: Weighting<'_>,
    train: &[TaskBatch],
    meta: &TaskBatch,
    lr_inner: f64,
    sampler: &dyn NeighborSampler,
    mode: JacobianMode,
) -> Result<MetaGradient> {
    let (pass, g_train) = train_gradient(learner, w, train, sampler, weighting)?;
    let w_virtual = w.with_tensors(sgd_virtual_step(w.tensors(), &g_train, lr_inner)?)?;
    let (meta_value, g_meta) = meta_loss(learner, &w_virtual, meta, sampler)?;

    let u = match mode {
        JacobianMode::Forward => {
            let tangents: Vec<(Var, &Tensor)> = pass.w.iter().copied().zip(g_meta.iter()).collect();
            let logits: Vec<Var> = pass.outputs.iter().map(|o| o.logits).collect();
            pass.tape.jvp(&tangents, &logits)?
        }
        JacobianMode::PerExample => per_example_products(learner, w, train, sampler, &g_meta)?,
    };

    // k_i = -α a_i m_i ℓ'(s_i)·u_i
    let mut coefficients = Vec::with_capacity(train.len());
    for (k, b) in train.iter().enumerate() {
        let kind = learner.head_kind(b.task);
        let d = loss_derivative(kind, pass.tape.value(pass.mixed[k]), &b.labels());
        let a = 1.0 / b.examples.len() as f64;
        let coef = (0..b.examples.len())
            .map(|i| {
                let du: f64 = d.row(i).iter().zip(u[k].row(i)).map(|(x, y)| x * y).sum();
                let m = pass.mix[k].as_ref().map_or(1.0, |m| m[i]);
                -lr_inner * (a * (m * du))
            })
            .collect();
        coefficients.push(coef);
    }

    let theta = if weighting.vnet.is_learned() {
        let mut tape = Tape::new();
        let tv = weighting.theta.register(&mut tape);
        let xi: Vec<Xi> = pass.xi.iter().flatten().copied().collect();
        let v = weighting.vnet.forward(&mut tape, &tv, &xi)?;
        let k = tape.constant(Tensor::column(coefficients.iter().flatten().copied().collect()));
        let obj = tape.mul(v, k)?;
        let obj = tape.sum(obj)?;
        tape.backward(obj)?.collect(&tv)
    } else {
        Vec::new()
    };

    let theta_h = match weighting.hint {
        Some((hint, params)) if !params.is_empty() => {
            let mut tape = Tape::new();
            let hv = params.register(&mut tape);
            let mut total: Option<Var> = None;
            for (k, b) in train.iter().enumerate() {
                if !hint.applies_to(b.task) {
                    continue;
                }
                let kind = learner.head_kind(b.task);
                let out = &pass.outputs[k];
                let m = hint.coefficient(&mut tape, &hv, &pass.xi[k])?;
                let h = hint.logits(&mut tape, &hv, b.task, &out.zu, out.zv.as_ref())?;
                let o = tape.constant(pass.tape.value(out.logits).clone());
                let s = HintNet::mix(&mut tape, m, o, h)?;
                let cols = tape.shape(s)[1];
                let (p, target) = match kind {
                    HeadKind::PairBinary => (
                        tape.sigmoid(s)?,
                        Tensor::column(b.labels().iter().map(|&y| y as f64).collect()),
                    ),
                    _ => {
                        let mut onehot = Tensor::zeros(b.examples.len(), cols);
                        for (i, &y) in b.labels().iter().enumerate() {
                            onehot.set(i, y, 1.0);
                        }
                        (tape.softmax_rows(s)?, onehot)
                    }
                };
                let target = tape.constant(target);
                let lp = tape.sub(p, target)?;
                let uc = tape.constant(u[k].clone());
                let q = tape.mul(lp, uc)?;
                let q = tape.sum_cols(q)?;
                let q = tape.mul(q, m)?;
                let a = 1.0 / b.examples.len() as f64;
                let kp = tape.constant(Tensor::column(pass.weights[k].iter().map(|v| -lr_inner * a * v).collect()));
                let term = tape.mul(q, kp)?;
                let term = tape.sum(term)?;
                total = Some(match total {
                    None => term,
                    Some(t) => tape.add(t, term)?,
                });
            }
            match total {
                Some(t) => tape.backward(t)?.collect(&hv),
                None => params.tensors().iter().map(Tensor::zeros_like).collect(),
            }
        }
        _ => Vec::new(),
    };
    Ok(MetaGradient {
        theta,
        theta_h,
        meta_loss: meta_value,
        coefficients,
        pass,
    })
}
