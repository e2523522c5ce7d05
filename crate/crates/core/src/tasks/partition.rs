use rand::seq::SliceRandom;
use rand::Rng;

use super::{Example, HeadKind, LabeledSet, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub parts: Vec<usize>,
    pub edge_cut: usize,
    pub initial_cut: usize,
    pub moves: usize,
}

/// Distinct undirected node pairs joined by at least one edge.
fn simple_neighbors(g: &HeteroGraph) -> Vec<Vec<usize>> {
    (0..g.num_nodes())
        .map(|v| {
            let mut n: Vec<usize> = g.union_neighbors(v).iter().copied().filter(|&u| u != v).collect();
            n.dedup();
            n
        })
        .collect()
}

/// Number of distinct adjacent node pairs in different parts.
pub fn edge_cut(g: &HeteroGraph, parts: &[usize]) -> usize {
    simple_neighbors(g)
        .iter()
        .enumerate()
        .map(|(v, n)| n.iter().filter(|&&u| u > v && parts[u] != parts[v]).count())
        .sum()
}

/// Greedy Kernighan–Lin style refinement of a random balanced partition.
///
/// Each round applies the single best positive-gain change, either moving
/// one node into a part below the size cap or swapping two nodes across
/// parts. The cap is `max(ceil(N/K), floor((1 + tol) N / K))`.
pub fn partition(g: &HeteroGraph, k: usize, balance_tol: f64, rng: &mut impl Rng) -> Result<Partition> {
    let n = g.num_nodes();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("cannot split {n} nodes into {k} parts")));
    }
    if balance_tol < 0.0 {
        return Err(Error::invalid("balance tolerance must be non-negative"));
    }
    let cap = n.div_ceil(k).max(((1.0 + balance_tol) * n as f64 / k as f64).floor() as usize);
    let nbrs = simple_neighbors(g);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut parts = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        parts[v] = i % k;
    }
    let mut sizes = vec![0usize; k];
    for &p in &parts {
        sizes[p] += 1;
    }
    // links[v][p] = neighbours of v inside part p
    let mut links = vec![vec![0i64; k]; n];
    for v in 0..n {
        for &u in &nbrs[v] {
            links[v][parts[u]] += 1;
        }
    }
    let initial_cut = edge_cut(g, &parts);

    let mut moves = 0;
    loop {
        // (gain, node, target, swap partner)
        let mut best: Option<(i64, usize, usize, Option<usize>)> = None;
        for v in 0..n {
            let a = parts[v];
            for b in 0..k {
                if b == a || sizes[b] >= cap {
                    continue;
                }
                let gain = links[v][b] - links[v][a];
                if gain > 0 && best.is_none_or(|(g0, ..)| gain > g0) {
                    best = Some((gain, v, b, None));
                }
            }
        }
        for v in 0..n {
            for u in v + 1..n {
                let (a, b) = (parts[v], parts[u]);
                if a == b {
                    continue;
                }
                let joined = i64::from(nbrs[v].binary_search(&u).is_ok());
                let gain = links[v][b] - links[v][a] + links[u][a] - links[u][b] - 2 * joined;
                if gain > 0 && best.is_none_or(|(g0, ..)| gain > g0) {
                    best = Some((gain, v, b, Some(u)));
                }
            }
        }
        let Some((_, v, b, partner)) = best else { break };
        let mut relocate = |x: usize, to: usize, parts: &mut Vec<usize>| {
            let from = parts[x];
            for &y in &nbrs[x] {
                links[y][from] -= 1;
                links[y][to] += 1;
            }
            sizes[from] -= 1;
            sizes[to] += 1;
            parts[x] = to;
        };
        let a = parts[v];
        relocate(v, b, &mut parts);
        if let Some(u) = partner {
            relocate(u, a, &mut parts);
        }
        moves += 1;
    }
    let edge_cut = edge_cut(g, &parts);
    Ok(Partition {
        parts,
        edge_cut,
        initial_cut,
        moves,
    })
}

pub fn partition_labels(g: &HeteroGraph, k: usize, balance_tol: f64, id: usize, rng: &mut impl Rng) -> Result<(LabeledSet, Partition)> {
    let p = partition(g, k, balance_tol, rng)?;
    let spec = TaskSpec::new(id, "partition", TaskKind::Partition, HeadKind::NodeMulticlass, k)?;
    let set = LabeledSet::new(spec, p.parts.iter().enumerate().map(|(v, &c)| Example::node(v, c)).collect())?;
    Ok((set, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn homogeneous(n: usize, edges: &[(usize, usize)]) -> HeteroGraph {
        let e: Vec<_> = edges.iter().map(|&(u, v)| (u, 0, v)).collect();
        HeteroGraph::new(vec![0; n], vec!["n".into()], None, vec!["e".into()], &e).unwrap()
    }

    #[test]
    fn edgeless_graph_has_zero_cut_and_balanced_parts() {
        let g = homogeneous(9, &[]);
        let p = partition(&g, 3, 0.0, &mut rng::stream(1, 0)).unwrap();
        assert_eq!(p.edge_cut, 0);
        let mut sizes = [0; 3];
        for &x in &p.parts {
            sizes[x] += 1;
        }
        assert_eq!(sizes, [3, 3, 3]);
    }

    #[test]
    fn invalid_part_counts() {
        let g = homogeneous(3, &[]);
        assert!(partition(&g, 1, 0.0, &mut rng::stream(1, 0)).is_err());
        assert!(partition(&g, 4, 0.0, &mut rng::stream(1, 0)).is_err());
    }

    #[test]
    fn cut_counts_multi_edges_once() {
        let g = homogeneous(2, &[(0, 1), (1, 0)]);
        assert_eq!(edge_cut(&g, &[0, 1]), 1);
    }
}
