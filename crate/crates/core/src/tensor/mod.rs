//! Dense tensors and reverse-mode automatic differentiation.

mod checkpoint;
mod dense;
mod optim;
mod params;
mod tape;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dense::Tensor;
pub use optim::{sgd_virtual_step, AdamConfig, AdamState};
pub use params::ParamSet;
pub use tape::{Gradients, Tape, Var};
