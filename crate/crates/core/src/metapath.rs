//! Meta-path schemas and labelled node-pair generation.
//!
//! A schema is a chain of edge types followed in their stored direction.
//! Positives come from constrained random walks; negatives corrupt the tail
//! with a random node of the same type that the schema cannot reach.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

/// Paper-style schemas have between two and four hops.
pub const TYPICAL_LEN: std::ops::RangeInclusive<usize> = 2..=4;

/// Walk attempts in a row that may fail before a schema is declared empty.
const MAX_CONSECUTIVE_FAILURES: usize = 1000;

/// Corrupted tails tried per negative before the example is skipped.
const NEGATIVE_TRIES: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPathSchema {
    pub name: String,
    pub edge_types: Vec<usize>,
}

impl MetaPathSchema {
    pub fn new(g: &HeteroGraph, edge_types: Vec<usize>) -> Result<Self> {
        if edge_types.is_empty() {
            return Err(Error::invalid("meta-path needs at least one edge type"));
        }
        if let Some(&bad) = edge_types.iter().find(|&&t| t >= g.num_edge_types()) {
            return Err(Error::invalid(format!("edge type id {bad} out of range")));
        }
        let name = edge_types
            .iter()
            .map(|&t| g.edge_type_names()[t].as_str())
            .collect::<Vec<_>>()
            .join("-");
        Ok(Self { name, edge_types })
    }

    pub fn from_names<S: AsRef<str>>(g: &HeteroGraph, names: &[S]) -> Result<Self> {
        let ids = names
            .iter()
            .map(|n| {
                g.edge_type_id(n.as_ref())
                    .ok_or_else(|| Error::Config(format!("unknown edge type {:?} in meta-path", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(g, ids)
    }

    pub fn len(&self) -> usize {
        self.edge_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_types.is_empty()
    }

    /// Outside the usual 2..=4 hop range.
    pub fn is_flagged(&self) -> bool {
        !TYPICAL_LEN.contains(&self.len())
    }

    /// Sorted set of tails reachable from `head` by an instance of the schema.
    pub fn reachable(&self, g: &HeteroGraph, head: usize) -> Vec<usize> {
        let mut frontier = vec![head];
        for &t in &self.edge_types {
            let mut next: Vec<usize> = frontier
                .iter()
                .flat_map(|&u| g.forward(t).neighbors(u).iter().copied())
                .collect();
            next.sort_unstable();
            next.dedup();
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
        frontier
    }

    /// Exact number of schema instances (walks) in the graph.
    pub fn instance_count(&self, g: &HeteroGraph) -> f64 {
        // counts[v] = number of partial instances ending at v
        let mut counts = vec![1.0; g.num_nodes()];
        for &t in &self.edge_types {
            let mut next = vec![0.0; g.num_nodes()];
            for (u, v) in g.forward(t).iter() {
                next[v] += counts[u];
            }
            counts = next;
        }
        counts.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PairExample {
    pub head: usize,
    pub tail: usize,
    pub label: u8,
    pub task: usize,
}

fn composable(ends: &[(Vec<usize>, Vec<usize>)], a: usize, b: usize) -> bool {
    ends[a].1.iter().any(|t| ends[b].0.contains(t))
}

/// All non-empty chains of 2..=`max_len` composable edge types, most
/// instances first (ties by name), truncated to `limit`.
pub fn enumerate_schemas(g: &HeteroGraph, max_len: usize, limit: usize) -> Result<Vec<MetaPathSchema>> {
    if max_len < 2 {
        return Err(Error::invalid("max_len must be at least 2"));
    }
    let k = g.num_edge_types();
    let ends: Vec<_> = (0..k).map(|t| g.endpoint_types(t)).collect();
    let mut found = Vec::new();
    let mut stack: Vec<Vec<usize>> = (0..k).filter(|&t| !ends[t].0.is_empty()).map(|t| vec![t]).collect();
    while let Some(chain) = stack.pop() {
        if chain.len() >= 2 {
            let s = MetaPathSchema::new(g, chain.clone())?;
            let count = s.instance_count(g);
            if count > 0.0 {
                found.push((count, s));
            }
        }
        if chain.len() < max_len {
            let last = *chain.last().expect("non-empty");
            for t in 0..k {
                if composable(&ends, last, t) {
                    let mut next = chain.clone();
                    next.push(t);
                    stack.push(next);
                }
            }
        }
    }
    found.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.name.cmp(&b.1.name)));
    Ok(found.into_iter().take(limit).map(|(_, s)| s).collect())
}

/// Random walks that follow the schema exactly; each walk lists the
/// `len + 1` visited nodes.
pub fn sample_walks(g: &HeteroGraph, schema: &MetaPathSchema, n: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::invalid("need at least one walk"));
    }
    let first = schema.edge_types[0];
    let starts: Vec<usize> = (0..g.num_nodes()).filter(|&v| g.forward(first).degree(v) > 0).collect();
    if starts.is_empty() {
        return Err(Error::TaskDropped(format!("meta-path {} has no instances", schema.name)));
    }
    let mut walks = Vec::with_capacity(n);
    let mut failures = 0;
    while walks.len() < n {
        let mut walk = vec![starts[rng.random_range(0..starts.len())]];
        let mut ok = true;
        for &t in &schema.edge_types {
            let nbrs = g.forward(t).neighbors(*walk.last().expect("non-empty"));
            if nbrs.is_empty() {
                ok = false;
                break;
            }
            walk.push(nbrs[rng.random_range(0..nbrs.len())]);
        }
        if ok {
            walks.push(walk);
            failures = 0;
        } else {
            failures += 1;
            if failures >= MAX_CONSECUTIVE_FAILURES {
                let why = if walks.is_empty() { "has no instances" } else { "is too sparse to sample" };
                return Err(Error::TaskDropped(format!("meta-path {} {why}", schema.name)));
            }
        }
    }
    Ok(walks)
}

/// `n` positive `(walk start, walk end)` pairs.
pub fn sample_positive_pairs(
    g: &HeteroGraph,
    schema: &MetaPathSchema,
    n: usize,
    task: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PairExample>> {
    Ok(sample_walks(g, schema, n, rng)?
        .into_iter()
        .map(|w| PairExample {
            head: w[0],
            tail: *w.last().expect("non-empty walk"),
            label: 1,
            task,
        })
        .collect())
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NegativeSample {
    pub examples: Vec<PairExample>,
    /// Positives for which no non-instance tail was found.
    pub skipped: usize,
}

/// One tail-corrupted negative per positive.
pub fn sample_negative_pairs(
    positives: &[PairExample],
    g: &HeteroGraph,
    schema: &MetaPathSchema,
    rng: &mut impl Rng,
) -> Result<NegativeSample> {
    if positives.is_empty() {
        return Err(Error::invalid("no positives to corrupt"));
    }
    let mut by_type: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut reach: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut out = NegativeSample::default();
    for p in positives {
        let ty = g.node_type(p.tail);
        let candidates = by_type.entry(ty).or_insert_with(|| g.nodes_of_type(ty));
        let reachable = reach.entry(p.head).or_insert_with(|| schema.reachable(g, p.head));
        let mut found = None;
        for _ in 0..NEGATIVE_TRIES {
            let c = candidates[rng.random_range(0..candidates.len())];
            if reachable.binary_search(&c).is_err() {
                found = Some(c);
                break;
            }
        }
        match found {
            Some(tail) => out.examples.push(PairExample {
                head: p.head,
                tail,
                label: 0,
                task: p.task,
            }),
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

/// `head<TAB>tail<TAB>label<TAB>task` rows with a header.
pub fn pairs_to_tsv(examples: &[PairExample]) -> String {
    let mut s = String::from("head\ttail\tlabel\ttask\n");
    for e in examples {
        let _ = writeln!(s, "{}\t{}\t{}\t{}", e.head, e.tail, e.label, e.task);
    }
    s
}
