use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_synthetic, load_graph, load_labels, make_splits, HeteroGraph, SplitAssignment};
use crate::metapath::MetaPathSchema;
use crate::metrics::F1Average;
use crate::rng::{self, streams};
use crate::tasks::{
    clustering_labels, degree_labels, distance_labels, metapath_labels, pagerank_labels, partition_labels, Example,
    HeadKind, LabeledSet, TaskKind, TaskSpec,
};

use super::config::{AuxTaskConfig, DatasetSource, PrimaryTaskConfig};

/// A loaded graph with optional ground-truth node labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: HeteroGraph,
    pub labels: Option<Vec<(usize, usize)>>,
}

pub fn load_dataset(src: &DatasetSource) -> Result<Dataset> {
    match src {
        DatasetSource::Synthetic { generator, seed } => {
            let s = generate_synthetic(generator, *seed)?;
            let labels = s.communities.map(|c| c.into_iter().enumerate().collect());
            Ok(Dataset { graph: s.graph, labels })
        }
        DatasetSource::Files { nodes, edges, labels } => {
            let graph = load_graph(nodes, edges)?;
            let labels = labels.as_ref().map(load_labels).transpose()?;
            if let Some(l) = &labels {
                if let Some(&(v, _)) = l.iter().find(|(v, _)| *v >= graph.num_nodes()) {
                    return Err(Error::Graph(format!("label for node {v} outside the graph")));
                }
            }
            Ok(Dataset { graph, labels })
        }
    }
}

/// How the primary task is scored on held-out examples.
#[derive(Clone, Debug, PartialEq)]
pub enum Evaluation {
    Auc,
    F1(F1Average, usize),
    Recall { k: usize, edge_type: usize },
}

/// The primary task with its split and the graph used for message passing.
#[derive(Clone, Debug)]
pub struct PrimarySetup {
    pub set: LabeledSet,
    /// Split over indices into `set.examples`.
    pub split: SplitAssignment,
    /// Full graph minus held-out primary edges.
    pub graph: HeteroGraph,
    pub evaluation: Evaluation,
    pub removed_edges: usize,
}

fn edge_type(g: &HeteroGraph, name: &str, field: &str) -> Result<usize> {
    g.edge_type_id(name)
        .ok_or_else(|| Error::Config(format!("{field}: unknown edge type {name:?}")))
}

fn expand(items: &[usize], groups: &[Vec<usize>]) -> Vec<usize> {
    items.iter().flat_map(|&i| groups[i].iter().copied()).collect()
}

fn expand_split(split: &SplitAssignment, groups: &[Vec<usize>]) -> SplitAssignment {
    SplitAssignment {
        train: expand(&split.train, groups),
        valid: expand(&split.valid, groups),
        test: expand(&split.test, groups),
        meta_folds: split.meta_folds.iter().map(|f| expand(f, groups)).collect(),
    }
}

fn edge_task(
    g: &HeteroGraph,
    name: &str,
    reverse: Option<&str>,
    split: [f64; 3],
    meta_folds: usize,
    seed: u64,
) -> Result<(LabeledSet, SplitAssignment, HeteroGraph, usize, usize)> {
    let t = edge_type(g, name, "primary.edge_type")?;
    let rt = reverse
        .map(|r| edge_type(g, r, "primary.reverse_edge_type"))
        .transpose()?;
    let edges: Vec<(usize, usize)> = g.forward(t).iter().collect();
    let items = make_splits(edges.len(), (split[0], split[1], split[2]), meta_folds, seed)
        .map_err(|e| Error::Graph(format!("primary edge type {name}: {e}")))?;

    let mut r = rng::keyed(&[seed, streams::TASKS, 0]);
    let mut examples = Vec::with_capacity(2 * edges.len());
    let mut groups = Vec::with_capacity(edges.len());
    for &(u, v) in &edges {
        let pool = g.nodes_of_type(g.node_type(v));
        let mut group = vec![examples.len()];
        examples.push(Example::pair(u, v, 1));
        for _ in 0..20 {
            let w = pool[r.random_range(0..pool.len())];
            if !g.has_edge(t, u, w) {
                group.push(examples.len());
                examples.push(Example::pair(u, w, 0));
                break;
            }
        }
        groups.push(group);
    }

    let mut removed = Vec::new();
    for &i in items.valid.iter().chain(&items.test) {
        let (u, v) = edges[i];
        removed.push((u, t, v));
        if let Some(rt) = rt {
            if g.has_edge(rt, v, u) {
                removed.push((v, rt, u));
            }
        }
    }
    let graph = g.without_edges(&removed)?;
    let spec = TaskSpec::new(0, name, TaskKind::Primary, HeadKind::PairBinary, 2)?;
    let set = LabeledSet::new(spec, examples)?;
    Ok((set, expand_split(&items, &groups), graph, removed.len(), t))
}

pub fn build_primary(
    data: &Dataset,
    cfg: &PrimaryTaskConfig,
    split: [f64; 3],
    meta_folds: usize,
    seed: u64,
) -> Result<PrimarySetup> {
    let g = &data.graph;
    match cfg {
        PrimaryTaskConfig::LinkPrediction {
            edge_type,
            reverse_edge_type,
        } => {
            let (set, split, graph, removed_edges, _) =
                edge_task(g, edge_type, reverse_edge_type.as_deref(), split, meta_folds, seed)?;
            Ok(PrimarySetup {
                set,
                split,
                graph,
                evaluation: Evaluation::Auc,
                removed_edges,
            })
        }
        PrimaryTaskConfig::Recommendation {
            edge_type,
            reverse_edge_type,
            k,
        } => {
            let (set, split, graph, removed_edges, t) =
                edge_task(g, edge_type, reverse_edge_type.as_deref(), split, meta_folds, seed)?;
            Ok(PrimarySetup {
                set,
                split,
                graph,
                evaluation: Evaluation::Recall { k: *k, edge_type: t },
                removed_edges,
            })
        }
        PrimaryTaskConfig::NodeClassification { node_type, f1 } => {
            let labels = data
                .labels
                .as_ref()
                .ok_or_else(|| Error::Config("primary: node classification needs node labels".into()))?;
            let wanted = node_type
                .as_ref()
                .map(|n| {
                    g.node_type_id(n)
                        .ok_or_else(|| Error::Config(format!("primary.node_type: unknown node type {n:?}")))
                })
                .transpose()?;
            let mut by_node: BTreeMap<usize, usize> = BTreeMap::new();
            for &(v, l) in labels {
                if wanted.is_none_or(|t| g.node_type(v) == t) {
                    by_node.insert(v, l);
                }
            }
            let num_classes = by_node.values().max().map_or(0, |m| m + 1);
            if num_classes < 2 {
                return Err(Error::Graph("node classification needs at least two label values".into()));
            }
            let examples: Vec<Example> = by_node.iter().map(|(&v, &l)| Example::node(v, l)).collect();
            let split = make_splits(examples.len(), (split[0], split[1], split[2]), meta_folds, seed)
                .map_err(|e| Error::Graph(format!("labelled nodes: {e}")))?;
            let spec = TaskSpec::new(0, "node-class", TaskKind::Primary, HeadKind::NodeMulticlass, num_classes)?;
            Ok(PrimarySetup {
                set: LabeledSet::new(spec, examples)?,
                split,
                graph: g.clone(),
                evaluation: Evaluation::F1(*f1, num_classes),
                removed_edges: 0,
            })
        }
    }
}

/// A configured auxiliary task that produced no examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroppedTask {
    pub index: usize,
    pub reason: String,
}

/// Labels every configured auxiliary task on `g`. Tasks whose generator
/// reports no usable examples are dropped and listed; ids stay contiguous.
pub fn build_aux(g: &HeteroGraph, tasks: &[AuxTaskConfig], seed: u64) -> Result<(Vec<LabeledSet>, Vec<DroppedTask>)> {
    let mut sets = Vec::new();
    let mut dropped = Vec::new();
    for (index, task) in tasks.iter().enumerate() {
        let id = sets.len() + 1;
        let mut r = rng::keyed(&[seed, streams::TASKS, 1 + index as u64]);
        let built = match task {
            AuxTaskConfig::Metapath { path, positives } => MetaPathSchema::from_names(g, path)
                .and_then(|schema| metapath_labels(g, &schema, id, *positives, &mut r)),
            AuxTaskConfig::Degree { sample_frac } => degree_labels(g, *sample_frac, id, &mut r),
            AuxTaskConfig::Distance { pairs } => distance_labels(g, *pairs, id, &mut r),
            AuxTaskConfig::Pagerank {
                damping,
                tol,
                max_iter,
                sample_frac,
            } => pagerank_labels(g, *damping, *tol, *max_iter, *sample_frac, id, &mut r).map(|(s, _)| s),
            AuxTaskConfig::Clustering { k, max_iter } => clustering_labels(g, *k, *max_iter, id, &mut r),
            AuxTaskConfig::Partition { k, balance_tol } => {
                partition_labels(g, *k, *balance_tol, id, &mut r).map(|(s, _)| s)
            }
        };
        match built {
            Ok(set) if !set.is_empty() => sets.push(set),
            Ok(_) => dropped.push(DroppedTask {
                index,
                reason: "no examples".into(),
            }),
            Err(Error::TaskDropped(reason)) => dropped.push(DroppedTask { index, reason }),
            Err(Error::InvalidArgument(m) | Error::Config(m)) => return Err(Error::Config(format!("aux[{index}]: {m}"))),
            Err(e) => return Err(e),
        }
    }
    Ok((sets, dropped))
}
