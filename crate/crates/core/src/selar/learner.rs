use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gnn::{Encoder, EncoderConfig, PairScorer, TaskHead};
use crate::graph::{HeteroGraph, NeighborSampler};
use crate::tasks::{Example, HeadKind, TaskSpec};
use crate::tensor::{ParamSet, Tape, Tensor, Var};

/// Examples of one task; `task` is the position in the registry.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    pub task: usize,
    pub examples: Vec<Example>,
}

impl TaskBatch {
    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }
}

/// Learner logits for one task plus the detached embeddings hint heads read.
#[derive(Clone, Debug)]
pub struct TaskOutput {
    pub logits: Var,
    pub zu: Tensor,
    pub zv: Option<Tensor>,
}

/// Shared representation under the task heads.
#[derive(Clone, Debug)]
pub enum Body<'g> {
    /// Two-layer perceptron over a fixed feature table (no graph).
    Mlp { features: Tensor, hidden: usize, out: usize },
    Gnn { encoder: Encoder, graph: &'g HeteroGraph },
}

/// `f(x; w)`: a body shared by all tasks and one head per task.
#[derive(Clone, Debug)]
pub struct Learner<'g> {
    body: Body<'g>,
    heads: Vec<TaskHead>,
    body_params: usize,
}

impl<'g> Learner<'g> {
    pub fn new(body: Body<'g>, specs: &[TaskSpec], scorer: PairScorer) -> Result<Self> {
        let dim = match &body {
            Body::Mlp { out, .. } => *out,
            Body::Gnn { encoder, .. } => encoder.out_dim(),
        };
        let heads = specs
            .iter()
            .map(|s| TaskHead::new(s.head, scorer, s.num_classes, dim))
            .collect();
        let body_params = match &body {
            Body::Mlp { .. } => 4,
            Body::Gnn { encoder, .. } => encoder.init_params(&mut crate::rng::stream(0, 0)).len(),
        };
        if specs.is_empty() {
            return Err(Error::invalid("learner needs at least one task"));
        }
        Ok(Self {
            body,
            heads,
            body_params,
        })
    }

    pub fn mlp(features: Tensor, hidden: usize, out: usize, specs: &[TaskSpec], scorer: PairScorer) -> Result<Self> {
        Self::new(Body::Mlp { features, hidden, out }, specs, scorer)
    }

    pub fn gnn(graph: &'g HeteroGraph, cfg: &EncoderConfig, specs: &[TaskSpec], scorer: PairScorer) -> Result<Self> {
        let encoder = Encoder::new(cfg, graph)?;
        Self::new(Body::Gnn { encoder, graph }, specs, scorer)
    }

    pub fn heads(&self) -> &[TaskHead] {
        &self.heads
    }

    pub fn embed_dim(&self) -> usize {
        match &self.body {
            Body::Mlp { out, .. } => *out,
            Body::Gnn { encoder, .. } => encoder.out_dim(),
        }
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> ParamSet {
        let mut p = match &self.body {
            Body::Mlp { features, hidden, out } => {
                let mut p = ParamSet::new();
                p.push_glorot("mlp.w1", features.cols(), *hidden, rng);
                p.push_zeros("mlp.b1", 1, *hidden);
                p.push_glorot("mlp.w2", *hidden, *out, rng);
                p.push_zeros("mlp.b2", 1, *out);
                p
            }
            Body::Gnn { encoder, .. } => encoder.init_params(rng),
        };
        for (t, h) in self.heads.iter().enumerate() {
            let hp = h.init_params(&format!("head{t}"), rng);
            p.extend_prefixed("", &hp);
        }
        p
    }

    fn head_range(&self, task: usize) -> std::ops::Range<usize> {
        let start = self.body_params + self.heads[..task].iter().map(TaskHead::num_params).sum::<usize>();
        start..start + self.heads[task].num_params()
    }

    fn embed(&self, tape: &mut Tape, w: &[Var], nodes: &[usize], sampler: &dyn NeighborSampler) -> Result<Var> {
        match &self.body {
            Body::Mlp { features, .. } => {
                let x = tape.constant(features.gather_rows(nodes)?);
                let h = tape.linear(x, w[0], w[1])?;
                let h = tape.relu(h)?;
                tape.linear(h, w[2], w[3])
            }
            Body::Gnn { encoder, graph } => Ok(encoder.encode(tape, &w[..self.body_params], graph, nodes, sampler)?.z),
        }
    }

    /// Logits for every batch. Nodes are embedded once and shared by tasks.
    pub fn forward(
        &self,
        tape: &mut Tape,
        w: &[Var],
        batches: &[TaskBatch],
        sampler: &dyn NeighborSampler,
    ) -> Result<Vec<TaskOutput>> {
        let mut nodes = Vec::new();
        let mut pos: HashMap<usize, usize> = HashMap::new();
        let mut slot = |v: usize, nodes: &mut Vec<usize>| {
            *pos.entry(v).or_insert_with(|| {
                nodes.push(v);
                nodes.len() - 1
            })
        };
        let mut rows = Vec::with_capacity(batches.len());
        for b in batches {
            if b.task >= self.heads.len() {
                return Err(Error::invalid(format!("batch for unknown task {}", b.task)));
            }
            if b.examples.is_empty() {
                return Err(Error::invalid(format!("empty batch for task {}", b.task)));
            }
            let heads: Vec<usize> = b.examples.iter().map(|e| slot(e.head, &mut nodes)).collect();
            let tails: Option<Vec<usize>> = if self.heads[b.task].kind.is_pair() {
                Some(
                    b.examples
                        .iter()
                        .map(|e| e.tail.map(|t| slot(t, &mut nodes)).ok_or_else(|| Error::invalid("pair task with node example")))
                        .collect::<Result<_>>()?,
                )
            } else {
                None
            };
            rows.push((heads, tails));
        }
        let z = self.embed(tape, w, &nodes, sampler)?;
        let mut out = Vec::with_capacity(batches.len());
        for (b, (hr, tr)) in batches.iter().zip(rows) {
            let zu = tape.gather_rows(z, hr)?;
            let zv = tr.map(|t| tape.gather_rows(z, t)).transpose()?;
            let range = self.head_range(b.task);
            let logits = self.heads[b.task].forward(tape, &w[range], zu, zv)?;
            out.push(TaskOutput {
                logits,
                zu: tape.value(zu).clone(),
                zv: zv.map(|v| tape.value(v).clone()),
            });
        }
        Ok(out)
    }

    pub fn head_kind(&self, task: usize) -> HeadKind {
        self.heads[task].kind
    }
}

/// Per-example loss column `[n, 1]` for a head kind.
pub fn example_losses(tape: &mut Tape, kind: HeadKind, logits: Var, labels: &[usize]) -> Result<Var> {
    match kind {
        HeadKind::PairBinary => tape.bce_with_logits(logits, labels.iter().map(|&l| l as f64).collect()),
        _ => tape.softmax_cross_entropy(logits, labels.to_vec()),
    }
}
