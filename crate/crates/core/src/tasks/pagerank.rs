use rand::Rng;

use super::labels::{rank_classes, sample_nodes};
use super::{Example, HeadKind, LabeledSet, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

#[derive(Clone, Debug, PartialEq)]
pub struct PageRank {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// L1 distance between the final vector and one more power step.
    pub residual: f64,
    /// Largest `|Σ PR - 1|` seen across iterations.
    pub mass_drift: f64,
}

fn power_step(g: &HeteroGraph, out_deg: &[usize], pr: &[f64], damping: f64) -> Vec<f64> {
    let n = pr.len() as f64;
    let dangling: f64 = pr.iter().zip(out_deg).filter(|(_, &d)| d == 0).map(|(p, _)| p).sum();
    let base = (1.0 - damping) / n + damping * dangling / n;
    let mut next = vec![base; pr.len()];
    for t in 0..g.num_edge_types() {
        for (u, v) in g.forward(t).iter() {
            next[v] += damping * pr[u] / out_deg[u] as f64;
        }
    }
    next
}

/// Damped power iteration over the directed edges of every type.
///
/// Dangling nodes spread their mass uniformly. Iteration stops once the L1
/// change drops below `tol`; otherwise the `max_iter`-th iterate is
/// returned with `converged == false`.
pub fn pagerank(g: &HeteroGraph, damping: f64, tol: f64, max_iter: usize) -> Result<PageRank> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::invalid(format!("damping {damping} outside (0, 1]")));
    }
    let n = g.num_nodes();
    if n == 0 {
        return Err(Error::invalid("pagerank on an empty graph"));
    }
    let out_deg: Vec<usize> = (0..n)
        .map(|v| (0..g.num_edge_types()).map(|t| g.forward(t).degree(v)).sum())
        .collect();
    let mut pr = vec![1.0 / n as f64; n];
    let mut converged = false;
    let mut iterations = 0;
    let mut mass_drift: f64 = 0.0;
    while iterations < max_iter {
        let next = power_step(g, &out_deg, &pr, damping);
        iterations += 1;
        mass_drift = mass_drift.max((next.iter().sum::<f64>() - 1.0).abs());
        let change: f64 = next.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
        pr = next;
        if change < tol {
            converged = true;
            break;
        }
    }
    let check = power_step(g, &out_deg, &pr, damping);
    let residual = check.iter().zip(&pr).map(|(a, b)| (a - b).abs()).sum();
    Ok(PageRank {
        scores: pr,
        iterations,
        converged,
        residual,
        mass_drift,
    })
}

/// Three importance classes over PageRank scores, same rule as degree.
pub fn pagerank_labels(
    g: &HeteroGraph,
    damping: f64,
    tol: f64,
    max_iter: usize,
    sample_frac: f64,
    id: usize,
    rng: &mut impl Rng,
) -> Result<(LabeledSet, PageRank)> {
    let pr = pagerank(g, damping, tol, max_iter)?;
    let classes = rank_classes(&pr.scores);
    let nodes = sample_nodes(g.num_nodes(), sample_frac, rng)?;
    let spec = TaskSpec::new(id, "pagerank", TaskKind::Pagerank, HeadKind::NodeMulticlass, 3)?;
    let set = LabeledSet::new(spec, nodes.into_iter().map(|v| Example::node(v, classes[v])).collect())?;
    Ok((set, pr))
}
