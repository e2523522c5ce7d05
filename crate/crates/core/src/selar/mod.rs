//! Meta-learned weighting of auxiliary tasks.
//!
//! A [`WeightingNet`] scores every training example from its loss, task and
//! sign. Its parameters follow the gradient of the primary-task loss on a
//! held-out meta batch after one virtual learner step ([`meta_gradient`]).
//! The learner then takes a real step on the reweighted loss
//! ([`Trainer::step`]).

mod learner;
mod meta;
mod report;
mod step;
mod weighting;

pub use learner::{example_losses, Body, Learner, TaskBatch, TaskOutput};
pub use meta::{
    meta_gradient, meta_loss, train_gradient, train_pass, weighted_train_loss, JacobianMode, MetaGradient, TrainPass,
    Weighting,
};
pub use report::{focal_reference, loss_grid, ranking_csv, task_weight_report, weight_curve_dump, TaskRank};
pub use step::{selar_step, MetaBatchPlan, Scheme, SelarConfig, StepLog, TaskStepLog, Trainer};
pub use weighting::{HintNet, WeightMode, WeightingNet, Xi, WEIGHT_EPS};
