use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::HeadKind;
use crate::tensor::{ParamSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairScorer {
    #[default]
    Dot,
    Bilinear,
}

/// Output transform for one task on top of node embeddings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskHead {
    pub kind: HeadKind,
    pub scorer: PairScorer,
    pub num_classes: usize,
    pub dim: usize,
}

impl TaskHead {
    pub fn new(kind: HeadKind, scorer: PairScorer, num_classes: usize, dim: usize) -> Self {
        Self {
            kind,
            scorer,
            num_classes,
            dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.kind.output_dim(self.num_classes)
    }

    /// Bilinear matrices start at the identity, so they begin as a dot head.
    pub fn init_params(&self, prefix: &str, rng: &mut impl Rng) -> ParamSet {
        let mut p = ParamSet::new();
        match self.kind {
            HeadKind::PairBinary => {
                if self.scorer == PairScorer::Bilinear {
                    p.push(format!("{prefix}.bilinear"), Tensor::identity(self.dim));
                }
            }
            HeadKind::NodeMulticlass | HeadKind::PairMulticlass => {
                p.push_glorot(format!("{prefix}.w"), self.dim, self.num_classes, rng);
                p.push_zeros(format!("{prefix}.b"), 1, self.num_classes);
            }
        }
        p
    }

    pub fn num_params(&self) -> usize {
        match (self.kind, self.scorer) {
            (HeadKind::PairBinary, PairScorer::Dot) => 0,
            (HeadKind::PairBinary, PairScorer::Bilinear) => 1,
            _ => 2,
        }
    }

    /// Logits `[n, output_dim]`. Pair heads need `zv`; node heads ignore it.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], zu: Var, zv: Option<Var>) -> Result<Var> {
        if params.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "head expects {} parameter tensors, got {}",
                self.num_params(),
                params.len()
            )));
        }
        match self.kind {
            HeadKind::PairBinary => {
                let zv = zv.ok_or_else(|| Error::invalid("pair head needs two embeddings"))?;
                let left = match self.scorer {
                    PairScorer::Dot => zu,
                    PairScorer::Bilinear => tape.matmul(zu, params[0])?,
                };
                let prod = tape.mul(left, zv)?;
                tape.sum_cols(prod)
            }
            HeadKind::NodeMulticlass => tape.linear(zu, params[0], params[1]),
            HeadKind::PairMulticlass => {
                let zv = zv.ok_or_else(|| Error::invalid("pair head needs two embeddings"))?;
                let d = tape.sub(zu, zv)?;
                let d = tape.abs(d)?;
                tape.linear(d, params[0], params[1])
            }
        }
    }
}

fn head_params(tape: &mut Tape, params: &ParamSet) -> Vec<Var> {
    params.register_constant(tape)
}

/// Single pair logit outside of training.
pub fn score_pair(zu: &[f64], zv: &[f64], head: &TaskHead, params: &ParamSet) -> Result<f64> {
    if head.kind != HeadKind::PairBinary {
        return Err(Error::invalid("score_pair needs a pair-binary head"));
    }
    if zu.len() != head.dim || zv.len() != head.dim {
        return Err(Error::shape("score_pair", &[zu.len()], &[head.dim]));
    }
    let mut tape = Tape::new();
    let p = head_params(&mut tape, params);
    let u = tape.constant(Tensor::matrix(1, zu.len(), zu.to_vec())?);
    let v = tape.constant(Tensor::matrix(1, zv.len(), zv.to_vec())?);
    let out = head.forward(&mut tape, &p, u, Some(v))?;
    Ok(tape.value(out).item())
}

/// Class logits for one node embedding.
pub fn classify_node(z: &[f64], head: &TaskHead, params: &ParamSet) -> Result<Vec<f64>> {
    if head.kind != HeadKind::NodeMulticlass {
        return Err(Error::invalid("classify_node needs a node-multiclass head"));
    }
    if z.len() != head.dim {
        return Err(Error::shape("classify_node", &[z.len()], &[head.dim]));
    }
    let mut tape = Tape::new();
    let p = head_params(&mut tape, params);
    let u = tape.constant(Tensor::matrix(1, z.len(), z.to_vec())?);
    let out = head.forward(&mut tape, &p, u, None)?;
    Ok(tape.value(out).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn dot_of_equal_unit_vectors_is_one() {
        let h = TaskHead::new(HeadKind::PairBinary, PairScorer::Dot, 2, 3);
        let p = h.init_params("h", &mut rng::stream(0, 0));
        assert_eq!(score_pair(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0], &h, &p).unwrap(), 1.0);
        assert_eq!(score_pair(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &h, &p).unwrap(), 0.0);
    }

    #[test]
    fn identity_bilinear_equals_dot() {
        let dot = TaskHead::new(HeadKind::PairBinary, PairScorer::Dot, 2, 3);
        let bil = TaskHead::new(HeadKind::PairBinary, PairScorer::Bilinear, 2, 3);
        let pd = dot.init_params("d", &mut rng::stream(0, 0));
        let pb = bil.init_params("b", &mut rng::stream(0, 0));
        let (u, v) = ([0.3, -1.2, 2.0], [1.5, 0.25, -0.5]);
        assert_eq!(score_pair(&u, &v, &dot, &pd).unwrap(), score_pair(&u, &v, &bil, &pb).unwrap());
    }

    #[test]
    fn zero_weights_give_uniform_loss() {
        let h = TaskHead::new(HeadKind::NodeMulticlass, PairScorer::Dot, 4, 3);
        let mut p = h.init_params("n", &mut rng::stream(0, 0));
        *p.get_mut(0) = Tensor::zeros(3, 4);
        let logits = classify_node(&[1.0, 2.0, 3.0], &h, &p).unwrap();
        assert_eq!(logits, vec![0.0; 4]);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 4, logits).unwrap());
        let ce = tape.softmax_cross_entropy(x, vec![2]).unwrap();
        assert!((tape.value(ce).item() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn distance_head_reads_absolute_difference() {
        let h = TaskHead::new(HeadKind::PairMulticlass, PairScorer::Dot, 4, 2);
        let p = h.init_params("d", &mut rng::stream(1, 0));
        let run = |a: [f64; 2], b: [f64; 2]| {
            let mut tape = Tape::new();
            let vars = p.register_constant(&mut tape);
            let u = tape.constant(Tensor::matrix(1, 2, a.to_vec()).unwrap());
            let v = tape.constant(Tensor::matrix(1, 2, b.to_vec()).unwrap());
            let out = h.forward(&mut tape, &vars, u, Some(v)).unwrap();
            tape.value(out).clone()
        };
        assert_eq!(run([1.0, 5.0], [3.0, 2.0]), run([3.0, 2.0], [1.0, 5.0]));
        assert_eq!(run([1.0, 5.0], [3.0, 2.0]), run([0.0, 3.0], [2.0, 0.0]));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let h = TaskHead::new(HeadKind::NodeMulticlass, PairScorer::Dot, 3, 2);
        let p = h.init_params("n", &mut rng::stream(0, 0));
        assert!(score_pair(&[0.0; 2], &[0.0; 2], &h, &p).is_err());
    }
}
