use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FullNeighbors, NeighborSampler, SampledNeighbors, SplitAssignment};
use crate::rng::{self, streams};
use crate::tasks::{Example, TaskRegistry, TaskSpec};
use crate::tensor::{AdamConfig, AdamState, ParamSet, Tensor};

use super::learner::{Learner, TaskBatch};
use super::meta::{meta_gradient, train_gradient, JacobianMode, Weighting};
use super::weighting::{HintNet, WeightingNet};

/// Training scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Primary task only, unit weights.
    Vanilla,
    /// Primary task only, meta-learned example weights.
    ReweightOnly,
    /// Primary and auxiliary tasks, unit weights.
    Multitask,
    /// Primary and auxiliary tasks, meta-learned weights.
    Selar,
    /// As `Selar`, with hint mixing on auxiliary tasks.
    SelarHint,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Vanilla,
        Scheme::ReweightOnly,
        Scheme::Multitask,
        Scheme::Selar,
        Scheme::SelarHint,
    ];

    pub fn uses_aux(self) -> bool {
        matches!(self, Scheme::Multitask | Scheme::Selar | Scheme::SelarHint)
    }

    pub fn learns_weights(self) -> bool {
        matches!(self, Scheme::ReweightOnly | Scheme::Selar | Scheme::SelarHint)
    }

    pub fn uses_hint(self) -> bool {
        self == Scheme::SelarHint
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Vanilla => "vanilla",
            Scheme::ReweightOnly => "reweight-only",
            Scheme::Multitask => "multitask",
            Scheme::Selar => "selar",
            Scheme::SelarHint => "selar-hint",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelarConfig {
    /// Adam step size for the learner.
    pub lr: f64,
    /// Adam step size for the weighting and hint networks.
    pub lr_meta: f64,
    /// Step size of the virtual SGD step.
    pub lr_inner: f64,
    pub gamma: f64,
    pub task_dim: usize,
    pub weight_hidden: usize,
    pub batch_primary: usize,
    pub batch_aux: usize,
    pub batch_meta: usize,
    /// Sampled neighbourhood size during training; `None` reads every neighbour.
    pub neighbor_size: Option<usize>,
    pub jacobian: JacobianMode,
}

impl Default for SelarConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            lr_meta: 0.01,
            lr_inner: 0.1,
            gamma: 0.5,
            task_dim: 4,
            weight_hidden: 64,
            batch_primary: 128,
            batch_aux: 64,
            batch_meta: 64,
            neighbor_size: Some(8),
            jacobian: JacobianMode::Forward,
        }
    }
}

/// Which meta fold serves as meta data at each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetaBatchPlan {
    folds: usize,
}

impl MetaBatchPlan {
    pub fn new(folds: usize) -> Result<Self> {
        if folds == 0 {
            return Err(Error::invalid("meta batch plan needs at least one fold"));
        }
        Ok(Self { folds })
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn meta_fold(&self, step: usize) -> usize {
        step % self.folds
    }

    /// Full rotation as `(train folds, meta fold)` per step index.
    pub fn schedule(&self, steps: usize) -> Vec<(Vec<usize>, usize)> {
        (0..steps)
            .map(|s| {
                let m = self.meta_fold(s);
                ((0..self.folds).filter(|&f| f != m).collect(), m)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskStepLog {
    pub task_id: usize,
    pub mean_weighted_loss: f64,
    pub mean_weight: f64,
    pub mean_loss: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub train_loss: f64,
    pub meta_loss: Option<f64>,
    pub tasks: Vec<TaskStepLog>,
}

/// Learner, weighting/hint networks, their optimisers and the batch plan.
pub struct Trainer<'g> {
    pub learner: Learner<'g>,
    pub scheme: Scheme,
    pub cfg: SelarConfig,
    pub vnet: WeightingNet,
    pub hint: Option<HintNet>,
    pub w: ParamSet,
    pub theta: ParamSet,
    pub theta_h: ParamSet,
    opt_w: AdamState,
    opt_theta: AdamState,
    opt_h: AdamState,
    specs: Vec<TaskSpec>,
    examples: Vec<Vec<Example>>,
    folds: Vec<(Vec<usize>, Vec<usize>)>,
    plan: MetaBatchPlan,
    seed: u64,
    steps: usize,
}

impl<'g> Trainer<'g> {
    /// `split` indexes the primary task's examples. Auxiliary tasks are
    /// trained on all their examples.
    pub fn new(
        learner: Learner<'g>,
        registry: &TaskRegistry,
        split: &SplitAssignment,
        scheme: Scheme,
        cfg: SelarConfig,
        seed: u64,
    ) -> Result<Self> {
        if !scheme.uses_aux() && registry.len() > 1 {
            return Err(Error::invalid(format!("scheme {scheme} trains on the primary task only")));
        }
        if learner.heads().len() != registry.len() {
            return Err(Error::invalid("learner heads do not match the registry"));
        }
        let specs = registry.specs();
        let n = specs.len();
        let vnet = if scheme.learns_weights() {
            WeightingNet::learned(n, cfg.task_dim, cfg.weight_hidden)
        } else {
            WeightingNet::fixed(n, 1.0)
        };
        let hint = if scheme.uses_hint() {
            Some(HintNet::new(
                WeightingNet::learned(n, cfg.task_dim, cfg.weight_hidden),
                &specs,
                learner.embed_dim(),
                cfg.gamma,
            )?)
        } else {
            None
        };
        let w = learner.init_params(&mut rng::stream(seed, streams::INIT));
        let theta = vnet.init_params("v", &mut rng::stream(seed, streams::WEIGHT_INIT));
        let theta_h = hint
            .as_ref()
            .map_or_else(ParamSet::new, |h| h.init_params(&mut rng::stream(seed, streams::HINT_INIT)));
        let plan = MetaBatchPlan::new(split.num_folds())?;
        let folds = (0..plan.folds()).map(|r| split.fold_plan(r)).collect();
        Ok(Self {
            opt_w: AdamState::new(AdamConfig::with_lr(cfg.lr), w.tensors()),
            opt_theta: AdamState::new(AdamConfig::with_lr(cfg.lr_meta), theta.tensors()),
            opt_h: AdamState::new(AdamConfig::with_lr(cfg.lr_meta), theta_h.tensors()),
            learner,
            scheme,
            cfg,
            vnet,
            hint,
            w,
            theta,
            theta_h,
            specs,
            examples: registry.tasks().iter().map(|t| t.examples.clone()).collect(),
            folds,
            plan,
            seed,
            steps: 0,
        })
    }

    /// Freezes the weighting function at a constant.
    pub fn with_fixed_weights(mut self, value: f64) -> Self {
        self.vnet = WeightingNet::fixed(self.specs.len(), value);
        self.theta = ParamSet::new();
        self.opt_theta = AdamState::new(AdamConfig::with_lr(self.cfg.lr_meta), &[]);
        self
    }

    /// Freezes the hint mixing net at a constant (head parameters stay).
    pub fn with_fixed_hint(mut self, value: f64) -> Result<Self> {
        let Some(hint) = self.hint.as_mut() else {
            return Err(Error::invalid("scheme has no hint network"));
        };
        let drop = hint.vnet.num_params();
        hint.vnet = WeightingNet::fixed(self.specs.len(), value);
        let kept: Vec<(String, Tensor)> = self
            .theta_h
            .names()
            .iter()
            .cloned()
            .zip(self.theta_h.tensors().iter().cloned())
            .skip(drop)
            .collect();
        let mut p = ParamSet::new();
        for (n, t) in kept {
            p.push(n, t);
        }
        self.theta_h = p;
        self.opt_h = AdamState::new(AdamConfig::with_lr(self.cfg.lr_meta), self.theta_h.tensors());
        Ok(self)
    }

    pub fn specs(&self) -> &[TaskSpec] {
        &self.specs
    }

    pub fn plan(&self) -> MetaBatchPlan {
        self.plan
    }

    pub fn steps_done(&self) -> usize {
        self.steps
    }

    /// Whether a meta step runs before each learner step.
    pub fn meta_learning(&self) -> bool {
        self.scheme.learns_weights()
    }

    pub fn weighting(&self) -> Weighting<'_> {
        Weighting {
            vnet: &self.vnet,
            theta: &self.theta,
            hint: self.hint.as_ref().map(|h| (h, &self.theta_h)),
        }
    }

    pub fn train_sampler(&self, step: usize) -> Box<dyn NeighborSampler> {
        match self.cfg.neighbor_size {
            Some(size) => Box::new(SampledNeighbors {
                size,
                seed: rng::mix(&[self.seed, step as u64]),
            }),
            None => Box::new(FullNeighbors),
        }
    }

    fn draw(&self, stream: u64, step: usize, task_id: usize, pool: &[usize], size: usize) -> Vec<usize> {
        let mut r = rng::keyed(&[self.seed, stream, step as u64, task_id as u64]);
        let m = size.min(pool.len());
        sample(&mut r, pool.len(), m).into_iter().map(|i| pool[i]).collect()
    }

    /// Training batches for `step`: primary from the scheduled train folds,
    /// auxiliary tasks from their full example sets.
    pub fn train_batches(&self, step: usize) -> Vec<TaskBatch> {
        let (train, _) = &self.folds[self.plan.meta_fold(step)];
        let mut out = Vec::with_capacity(self.specs.len());
        for (t, spec) in self.specs.iter().enumerate() {
            let (pool, size): (Vec<usize>, usize) = if t == 0 {
                (train.clone(), self.cfg.batch_primary)
            } else {
                ((0..self.examples[t].len()).collect(), self.cfg.batch_aux)
            };
            let idx = self.draw(streams::TRAIN_BATCH, step, spec.id, &pool, size);
            out.push(TaskBatch {
                task: t,
                examples: idx.into_iter().map(|i| self.examples[t][i]).collect(),
            });
        }
        out
    }

    /// Primary-task batch from the scheduled meta fold.
    pub fn meta_batch(&self, step: usize) -> TaskBatch {
        let (_, meta) = &self.folds[self.plan.meta_fold(step)];
        let idx = self.draw(streams::META_BATCH, step, 0, meta, self.cfg.batch_meta);
        TaskBatch {
            task: 0,
            examples: idx.into_iter().map(|i| self.examples[0][i]).collect(),
        }
    }

    /// One bi-level step: meta update of the weighting (and hint) nets,
    /// then a learner update under the new weights.
    pub fn step(&mut self) -> Result<StepLog> {
        let step = self.steps;
        let batches = self.train_batches(step);
        if batches.iter().any(|b| b.examples.is_empty()) {
            return Err(Error::invalid("a task has no training examples"));
        }
        let sampler = self.train_sampler(step);

        let mut meta_loss = None;
        if self.meta_learning() {
            let meta = self.meta_batch(step);
            let mg = meta_gradient(
                &self.learner,
                &self.w,
                self.weighting(),
                &batches,
                &meta,
                self.cfg.lr_inner,
                sampler.as_ref(),
                self.cfg.jacobian,
            )?;
            if !mg.meta_loss.is_finite() {
                return Err(Error::Numeric(format!("meta loss is {} at step {step}", mg.meta_loss)));
            }
            meta_loss = Some(mg.meta_loss);
            if !mg.theta.is_empty() {
                self.opt_theta.step(self.theta.tensors_mut(), &mg.theta)?;
            }
            if !mg.theta_h.is_empty() {
                self.opt_h.step(self.theta_h.tensors_mut(), &mg.theta_h)?;
            }
        }

        let (pass, grads) = train_gradient(&self.learner, &self.w, &batches, sampler.as_ref(), self.weighting())?;
        let train_loss = pass.total_value();
        if !train_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite training loss or gradient at step {step}")));
        }
        self.opt_w.step(self.w.tensors_mut(), &grads)?;
        self.steps += 1;

        let tasks = batches
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let n = b.examples.len() as f64;
                TaskStepLog {
                    task_id: self.specs[b.task].id,
                    mean_weighted_loss: pass.task_means[k],
                    mean_weight: pass.weights[k].iter().sum::<f64>() / n,
                    mean_loss: pass.losses[k].iter().sum::<f64>() / n,
                    count: b.examples.len(),
                }
            })
            .collect();
        Ok(StepLog {
            step,
            train_loss,
            meta_loss,
            tasks,
        })
    }

    /// Learner logits for a batch (no gradient).
    pub fn logits(&self, batch: &TaskBatch, sampler: &dyn NeighborSampler) -> Result<Tensor> {
        let mut tape = crate::tensor::Tape::new();
        let wv = self.w.register_constant(&mut tape);
        let out = self.learner.forward(&mut tape, &wv, std::slice::from_ref(batch), sampler)?;
        Ok(tape.value(out[0].logits).clone())
    }

    /// Named parameter groups for checkpoints.
    pub fn checkpoint_groups(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (prefix, p) in [("w.", &self.w), ("theta.", &self.theta), ("theta_h.", &self.theta_h)] {
            for (n, t) in p.names().iter().zip(p.tensors()) {
                out.push((format!("{prefix}{n}"), t.clone()));
            }
        }
        out
    }
}

/// Runs one step of `trainer`; the step index is the trainer's own counter.
pub fn selar_step(trainer: &mut Trainer<'_>) -> Result<StepLog> {
    trainer.step()
}
