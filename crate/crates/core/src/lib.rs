//! Self-supervised auxiliary learning for graph neural networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] dense `f64` tensors, a reverse-mode tape with forward-mode
//!   tangents, Adam and the `SLRT` checkpoint format.
//! * [`graph`] the heterogeneous graph model, TSV ingestion, neighbour
//!   sampling, the synthetic generator and train/valid/test/meta splits.
//! * [`metapath`] meta-path schemas and labelled pair generation.
//! * [`tasks`] the structural self-supervised tasks (degree, distance,
//!   PageRank, clustering, partitioning) and the task registry.
//! * [`gnn`] GCN/SGC/GIN/GAT encoders and per-task heads.
//! * [`selar`] the weighting network, HintNet, the one-step-lookahead
//!   meta-gradient and the bi-level training step.
//! * [`metrics`] AUC, macro/micro F1, Recall@K and run aggregation.
//! * [`experiment`] run configuration, the seeded experiment runner and
//!   report generation used by the `selar` binary.

pub mod error;
pub mod experiment;
pub mod gnn;
pub mod graph;
pub mod metapath;
pub mod metrics;
pub mod rng;
pub mod selar;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use gnn::{EncoderConfig, EncoderKind, HeadKind, PairScorer, TaskHead};
pub use graph::{HeteroGraph, SplitAssignment};
pub use metapath::{MetaPathSchema, PairExample};
pub use tasks::{LabeledSet, TaskKind, TaskRegistry, TaskSpec};
pub use tensor::{AdamState, ParamSet, Tape, Tensor, Var};
