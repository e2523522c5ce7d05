//! Graph neural network encoders and task heads.

mod encoder;
mod heads;

pub use encoder::{Attention, Encoded, Encoder, EncoderConfig, EncoderKind};
pub use heads::{classify_node, score_pair, PairScorer, TaskHead};
pub use crate::tasks::HeadKind;
