use rand::Rng;

use crate::error::{Error, Result};
use crate::gnn::{PairScorer, TaskHead};
use crate::tasks::{HeadKind, TaskSpec};
use crate::tensor::{ParamSet, Tape, Tensor, Var};

/// Keeps weights strictly inside (0, 1) even when the sigmoid saturates.
pub const WEIGHT_EPS: f64 = 1e-6;

/// Input of the weighting function for one example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Xi {
    /// Learner loss of the example, treated as a constant.
    pub loss: f64,
    /// Registry position of the example's task.
    pub task: usize,
    /// 1 for positive examples, 0 for negatives; 1 for multiclass tasks.
    pub sign: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightMode {
    Learned,
    /// Constant weight, no parameters.
    Fixed(f64),
}

/// `V(ξ; Θ)`: `[loss, task embedding, sign] -> hidden (ReLU) -> sigmoid`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightingNet {
    pub num_tasks: usize,
    pub task_dim: usize,
    pub hidden: usize,
    pub mode: WeightMode,
}

impl WeightingNet {
    pub fn learned(num_tasks: usize, task_dim: usize, hidden: usize) -> Self {
        Self {
            num_tasks,
            task_dim,
            hidden,
            mode: WeightMode::Learned,
        }
    }

    pub fn fixed(num_tasks: usize, value: f64) -> Self {
        Self {
            num_tasks,
            task_dim: 0,
            hidden: 0,
            mode: WeightMode::Fixed(value),
        }
    }

    pub fn is_learned(&self) -> bool {
        self.mode == WeightMode::Learned
    }

    /// The output layer starts at zero, so every initial weight is 0.5.
    pub fn init_params(&self, prefix: &str, rng: &mut impl Rng) -> ParamSet {
        let mut p = ParamSet::new();
        if self.is_learned() {
            p.push_normal(format!("{prefix}.task_emb"), self.num_tasks, self.task_dim, 1.0, rng);
            p.push_glorot(format!("{prefix}.w1"), self.task_dim + 2, self.hidden, rng);
            p.push_zeros(format!("{prefix}.b1"), 1, self.hidden);
            p.push_zeros(format!("{prefix}.w2"), self.hidden, 1);
            p.push_zeros(format!("{prefix}.b2"), 1, 1);
        }
        p
    }

    pub fn num_params(&self) -> usize {
        if self.is_learned() {
            5
        } else {
            0
        }
    }

    fn check(&self, xi: &[Xi]) -> Result<()> {
        for x in xi {
            if !x.loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss {} fed to weighting net", x.loss)));
            }
            if x.task >= self.num_tasks {
                return Err(Error::invalid(format!("task {} outside weighting net", x.task)));
            }
        }
        Ok(())
    }

    /// Weights `[n, 1]` on the tape, differentiable in `theta` only.
    pub fn forward(&self, tape: &mut Tape, theta: &[Var], xi: &[Xi]) -> Result<Var> {
        self.check(xi)?;
        match self.mode {
            WeightMode::Fixed(v) => Ok(tape.constant(Tensor::full(xi.len(), 1, v))),
            WeightMode::Learned => {
                let loss = tape.constant(Tensor::column(xi.iter().map(|x| x.loss).collect()));
                let emb = tape.gather_rows(theta[0], xi.iter().map(|x| x.task).collect())?;
                let sign = tape.constant(Tensor::column(xi.iter().map(|x| x.sign).collect()));
                let input = tape.concat(&[loss, emb, sign])?;
                let h = tape.linear(input, theta[1], theta[2])?;
                let h = tape.relu(h)?;
                let o = tape.linear(h, theta[3], theta[4])?;
                let o = tape.sigmoid(o)?;
                // 0.5 maps to exactly 0.5
                let scale = 1.0 - 2.0 * WEIGHT_EPS;
                tape.affine(o, scale, 0.5 - 0.5 * scale)
            }
        }
    }

    pub fn weights(&self, theta: &ParamSet, xi: &[Xi]) -> Result<Vec<f64>> {
        if xi.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let vars = theta.register_constant(&mut tape);
        let v = self.forward(&mut tape, &vars, xi)?;
        Ok(tape.value(v).data().to_vec())
    }

    pub fn weight(&self, theta: &ParamSet, xi: Xi) -> Result<f64> {
        Ok(self.weights(theta, &[xi])?[0])
    }
}

/// Mixing net `V_H` and per-task hint heads `f_H` over detached embeddings.
///
/// Auxiliary predictions become `m s + (1 - m) h` with `m = V_H(ξ)^γ`.
#[derive(Clone, Debug, PartialEq)]
pub struct HintNet {
    pub vnet: WeightingNet,
    /// `None` for the primary task, which is never mixed.
    pub heads: Vec<Option<TaskHead>>,
    pub gamma: f64,
}

impl HintNet {
    pub fn new(vnet: WeightingNet, specs: &[TaskSpec], dim: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("hint gamma {gamma} outside (0, 1]")));
        }
        let heads = specs
            .iter()
            .map(|s| {
                (!s.is_primary()).then(|| {
                    let scorer = if s.head == HeadKind::PairBinary { PairScorer::Bilinear } else { PairScorer::Dot };
                    TaskHead::new(s.head, scorer, s.num_classes, dim)
                })
            })
            .collect();
        Ok(Self { vnet, heads, gamma })
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> ParamSet {
        let mut p = self.vnet.init_params("hint.v", rng);
        for (t, h) in self.heads.iter().enumerate() {
            if let Some(h) = h {
                p.extend_prefixed("", &h.init_params(&format!("hint.head{t}"), rng));
            }
        }
        p
    }

    pub fn applies_to(&self, task: usize) -> bool {
        self.heads.get(task).is_some_and(Option::is_some)
    }

    fn head_range(&self, task: usize) -> std::ops::Range<usize> {
        let mut start = self.vnet.num_params();
        for h in self.heads[..task].iter().flatten() {
            start += h.num_params();
        }
        let len = self.heads[task].as_ref().map_or(0, TaskHead::num_params);
        start..start + len
    }

    /// Mixing coefficients `V_H(ξ)^γ`, `[n, 1]`.
    pub fn coefficient(&self, tape: &mut Tape, theta_h: &[Var], xi: &[Xi]) -> Result<Var> {
        let v = self.vnet.forward(tape, &theta_h[..self.vnet.num_params()], xi)?;
        match self.vnet.mode {
            WeightMode::Fixed(c) => Ok(tape.constant(Tensor::full(xi.len(), 1, c.powf(self.gamma)))),
            WeightMode::Learned => tape.powf(v, self.gamma),
        }
    }

    /// Hint logits from detached embeddings.
    pub fn logits(&self, tape: &mut Tape, theta_h: &[Var], task: usize, zu: &Tensor, zv: Option<&Tensor>) -> Result<Var> {
        let head = self.heads[task]
            .as_ref()
            .ok_or_else(|| Error::invalid("hint requested for the primary task"))?;
        let u = tape.constant(zu.clone());
        let v = zv.map(|z| tape.constant(z.clone()));
        let range = self.head_range(task);
        head.forward(tape, &theta_h[range], u, v)
    }

    /// `m o + (1 - m) h`.
    pub fn mix(tape: &mut Tape, m: Var, o: Var, h: Var) -> Result<Var> {
        let keep = tape.mul(o, m)?;
        let rest = tape.affine(m, -1.0, 1.0)?;
        let hint = tape.mul(h, rest)?;
        tape.add(keep, hint)
    }
}
