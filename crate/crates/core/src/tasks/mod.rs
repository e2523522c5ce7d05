//! Self-supervised auxiliary tasks and the task registry.

mod cluster;
mod labels;
mod pagerank;
mod partition;

pub use cluster::{clustering_features, clustering_labels, kmeans, KMeans};
pub use labels::{bfs_distances, degree_labels, distance_class, distance_labels, rank_classes};
pub use pagerank::{pagerank, pagerank_labels, PageRank};
pub use partition::{edge_cut, partition, partition_labels, Partition};

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::metapath::{sample_negative_pairs, sample_positive_pairs, MetaPathSchema};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Primary,
    Metapath,
    Degree,
    Distance,
    Pagerank,
    Clustering,
    Partition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    /// One logit per node pair, binary cross-entropy.
    PairBinary,
    /// Class logits per node, softmax cross-entropy.
    NodeMulticlass,
    /// Class logits from `|z_u - z_v|`, softmax cross-entropy.
    PairMulticlass,
}

impl HeadKind {
    pub fn is_pair(self) -> bool {
        !matches!(self, HeadKind::NodeMulticlass)
    }

    /// Width of the logit row for a task with `num_classes` classes.
    pub fn output_dim(self, num_classes: usize) -> usize {
        match self {
            HeadKind::PairBinary => 1,
            _ => num_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: usize,
    pub name: String,
    pub kind: TaskKind,
    pub head: HeadKind,
    pub num_classes: usize,
}

impl TaskSpec {
    pub fn new(id: usize, name: impl Into<String>, kind: TaskKind, head: HeadKind, num_classes: usize) -> Result<Self> {
        if (id == 0) != (kind == TaskKind::Primary) {
            return Err(Error::invalid("task id 0 is reserved for the primary task"));
        }
        match head {
            HeadKind::PairBinary if num_classes != 2 => {
                return Err(Error::invalid("pair-binary heads have exactly 2 classes"))
            }
            _ if num_classes < 2 => return Err(Error::invalid("multiclass heads need at least 2 classes")),
            _ => {}
        }
        Ok(Self {
            id,
            name: name.into(),
            kind,
            head,
            num_classes,
        })
    }

    pub fn is_primary(&self) -> bool {
        self.kind == TaskKind::Primary
    }
}

/// A labelled node (`tail == None`) or node pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Example {
    pub head: usize,
    pub tail: Option<usize>,
    pub label: usize,
}

impl Example {
    pub fn node(v: usize, label: usize) -> Self {
        Self {
            head: v,
            tail: None,
            label,
        }
    }

    pub fn pair(u: usize, v: usize, label: usize) -> Self {
        Self {
            head: u,
            tail: Some(v),
            label,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub spec: TaskSpec,
    pub examples: Vec<Example>,
    /// Candidates discarded while generating (unreachable pairs, negatives
    /// without a valid tail).
    pub skipped: usize,
}

impl LabeledSet {
    pub fn new(spec: TaskSpec, examples: Vec<Example>) -> Result<Self> {
        let pair = spec.head.is_pair();
        for e in &examples {
            if e.label >= spec.num_classes {
                return Err(Error::invalid(format!(
                    "task {}: label {} outside [0, {})",
                    spec.name, e.label, spec.num_classes
                )));
            }
            if e.tail.is_some() != pair {
                return Err(Error::invalid(format!("task {}: example arity does not match head", spec.name)));
            }
        }
        Ok(Self {
            spec,
            examples,
            skipped: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.spec.num_classes];
        for e in &self.examples {
            c[e.label] += 1;
        }
        c
    }

    /// `node<TAB>label` or `head<TAB>tail<TAB>label` rows with a header.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        if self.spec.head.is_pair() {
            s.push_str("head\ttail\tlabel\n");
        } else {
            s.push_str("node\tlabel\n");
        }
        for e in &self.examples {
            match e.tail {
                Some(t) => writeln!(s, "{}\t{}\t{}", e.head, t, e.label),
                None => writeln!(s, "{}\t{}", e.head, e.label),
            }
            .expect("writing to a String cannot fail");
        }
        s
    }
}

/// Balanced positives and tail-corrupted negatives for one meta-path.
pub fn metapath_labels(
    g: &HeteroGraph,
    schema: &MetaPathSchema,
    id: usize,
    num_positives: usize,
    rng: &mut impl Rng,
) -> Result<LabeledSet> {
    let spec = TaskSpec::new(id, schema.name.clone(), TaskKind::Metapath, HeadKind::PairBinary, 2)?;
    let pos = sample_positive_pairs(g, schema, num_positives, id, rng)?;
    let neg = sample_negative_pairs(&pos, g, schema, rng)?;
    let examples = pos
        .iter()
        .chain(&neg.examples)
        .map(|p| Example::pair(p.head, p.tail, p.label as usize))
        .collect();
    let mut set = LabeledSet::new(spec, examples)?;
    set.skipped = neg.skipped;
    Ok(set)
}

/// Primary task first, then auxiliary tasks in the order given.
#[derive(Clone, Debug)]
pub struct TaskRegistry {
    tasks: Vec<LabeledSet>,
}

pub fn build_task_registry(primary: LabeledSet, aux: Vec<LabeledSet>) -> Result<TaskRegistry> {
    if !primary.spec.is_primary() {
        return Err(Error::invalid("registry needs a primary task"));
    }
    let mut tasks = vec![primary];
    for t in aux {
        if t.spec.is_primary() {
            return Err(Error::invalid("only one primary task is allowed"));
        }
        if tasks.iter().any(|s| s.spec.id == t.spec.id) {
            return Err(Error::invalid(format!("duplicate task id {}", t.spec.id)));
        }
        tasks.push(t);
    }
    Ok(TaskRegistry { tasks })
}

impl TaskRegistry {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn primary(&self) -> &LabeledSet {
        &self.tasks[0]
    }

    pub fn aux(&self) -> &[LabeledSet] {
        &self.tasks[1..]
    }

    pub fn tasks(&self) -> &[LabeledSet] {
        &self.tasks
    }

    pub fn specs(&self) -> Vec<TaskSpec> {
        self.tasks.iter().map(|t| t.spec.clone()).collect()
    }

    /// Position of a task id in iteration order.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.tasks.iter().position(|t| t.spec.id == id)
    }

    /// Same registry without the auxiliary tasks.
    pub fn primary_only(&self) -> Self {
        Self {
            tasks: vec![self.tasks[0].clone()],
        }
    }
}
