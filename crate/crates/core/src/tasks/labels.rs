use std::collections::{BTreeMap, VecDeque};

use rand::seq::index::sample;
use rand::Rng;

use super::{Example, HeadKind, LabeledSet, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

/// Random pair draws allowed per requested distance example.
const PAIR_ATTEMPTS: usize = 20;

/// Top-20% / bottom-20% / rest classes by nearest rank.
///
/// With `k = ceil(n / 5)`, the top threshold is the k-th largest value and
/// the bottom threshold the k-th smallest. Class 0 is `v >= top` (checked
/// first, so ties favour it), class 1 is `v <= bottom`, class 2 the rest.
pub fn rank_classes(values: &[f64]) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let k = values.len().div_ceil(5);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let bottom = sorted[k - 1];
    let top = sorted[sorted.len() - k];
    values
        .iter()
        .map(|&v| {
            if v >= top {
                0
            } else if v <= bottom {
                1
            } else {
                2
            }
        })
        .collect()
}

pub(super) fn sample_nodes(n: usize, frac: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(Error::invalid(format!("sample fraction {frac} outside (0, 1]")));
    }
    let m = ((frac * n as f64).round() as usize).clamp(1.min(n), n);
    let mut nodes = sample(rng, n, m).into_vec();
    nodes.sort_unstable();
    Ok(nodes)
}

pub fn degree_labels(g: &HeteroGraph, sample_frac: f64, id: usize, rng: &mut impl Rng) -> Result<LabeledSet> {
    let degrees: Vec<f64> = (0..g.num_nodes()).map(|v| g.degree(v) as f64).collect();
    let classes = rank_classes(&degrees);
    let nodes = sample_nodes(g.num_nodes(), sample_frac, rng)?;
    let spec = TaskSpec::new(id, "degree", TaskKind::Degree, HeadKind::NodeMulticlass, 3)?;
    LabeledSet::new(spec, nodes.into_iter().map(|v| Example::node(v, classes[v])).collect())
}

/// Hop counts from `src` over the union adjacency; `None` if unreachable.
pub fn bfs_distances(g: &HeteroGraph, src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_nodes()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].expect("queued nodes have a distance");
        for &v in g.union_neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Classes {1, 2, 3, >=4} hops.
pub fn distance_class(hops: usize) -> usize {
    debug_assert!(hops >= 1);
    hops.clamp(1, 4) - 1
}

/// Random distinct reachable pairs labelled by hop class. Unreachable draws
/// are counted in `skipped`.
pub fn distance_labels(g: &HeteroGraph, num_pairs: usize, id: usize, rng: &mut impl Rng) -> Result<LabeledSet> {
    if num_pairs == 0 {
        return Err(Error::invalid("need at least one pair"));
    }
    let n = g.num_nodes();
    let spec = TaskSpec::new(id, "distance", TaskKind::Distance, HeadKind::PairMulticlass, 4)?;
    if n < 2 {
        return Err(Error::TaskDropped("distance: fewer than two nodes".into()));
    }
    let mut cache: BTreeMap<usize, Vec<Option<usize>>> = BTreeMap::new();
    let mut examples = Vec::with_capacity(num_pairs);
    let mut skipped = 0;
    for _ in 0..num_pairs * PAIR_ATTEMPTS {
        if examples.len() == num_pairs {
            break;
        }
        let u = rng.random_range(0..n);
        let mut v = rng.random_range(0..n - 1);
        if v >= u {
            v += 1;
        }
        let dist = cache.entry(u).or_insert_with(|| bfs_distances(g, u));
        match dist[v] {
            Some(d) => examples.push(Example::pair(u, v, distance_class(d))),
            None => skipped += 1,
        }
    }
    if examples.is_empty() {
        return Err(Error::TaskDropped("distance: graph has no connected pair".into()));
    }
    let mut set = LabeledSet::new(spec, examples)?;
    set.skipped = skipped;
    Ok(set)
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
    fn nearest_rank_on_one_to_five() {
        assert_eq!(rank_classes(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1, 2, 2, 2, 0]);
    }

    #[test]
    fn regular_values_are_all_top() {
        assert_eq!(rank_classes(&[3.0; 6]), vec![0; 6]);
    }

    #[test]
    fn half_of_ten_nodes_are_labelled() {
        let g = homogeneous(10, &[(0, 1), (2, 3)]);
        let set = degree_labels(&g, 0.5, 1, &mut rng::stream(1, 0)).unwrap();
        assert_eq!(set.len(), 5);
    }

    #[test]
    fn path_distances() {
        let g = homogeneous(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let d = bfs_distances(&g, 0);
        assert_eq!(d, vec![Some(0), Some(1), Some(2), Some(3), Some(4)]);
        assert_eq!(distance_class(d[4].unwrap()), 3);
        assert_eq!(distance_class(d[2].unwrap()), 1);
        assert_eq!(distance_class(d[1].unwrap()), 0);
    }

    #[test]
    fn disconnected_pairs_are_skipped() {
        let g = homogeneous(4, &[(0, 1), (2, 3)]);
        let set = distance_labels(&g, 20, 2, &mut rng::stream(5, 0)).unwrap();
        assert!(set.skipped > 0);
        for e in &set.examples {
            assert_eq!(e.label, 0);
            assert_eq!(e.head / 2, e.tail.unwrap() / 2);
        }
    }

    #[test]
    fn edgeless_graph_drops_distance_task() {
        let g = homogeneous(3, &[]);
        assert!(matches!(
            distance_labels(&g, 5, 2, &mut rng::stream(0, 0)),
            Err(Error::TaskDropped(_))
        ));
    }
}
