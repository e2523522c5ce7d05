use rand::Rng;

use super::HeteroGraph;
use crate::rng;

/// Uniform sampling with replacement from the union neighbourhood.
///
/// Always returns exactly `size` ids; an isolated node yields `size` copies
/// of itself.
pub fn sample_neighbors(g: &HeteroGraph, node: usize, size: usize, rng: &mut impl Rng) -> Vec<usize> {
    let nbrs = g.union_neighbors(node);
    if nbrs.is_empty() {
        return vec![node; size];
    }
    (0..size).map(|_| nbrs[rng.random_range(0..nbrs.len())]).collect()
}

/// Chooses the neighbour slots an encoder aggregates over.
pub trait NeighborSampler: Sync {
    fn neighbors(&self, g: &HeteroGraph, node: usize, layer: usize) -> Vec<usize>;
}

/// Every neighbour, no sampling.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullNeighbors;

impl NeighborSampler for FullNeighbors {
    fn neighbors(&self, g: &HeteroGraph, node: usize, _layer: usize) -> Vec<usize> {
        g.union_neighbors(node).to_vec()
    }
}

/// GraphSAGE-style fixed-size sampling.
///
/// The stream for each `(seed, layer, node)` is independent, so a node's
/// sample does not depend on which batch it appears in.
#[derive(Clone, Copy, Debug)]
pub struct SampledNeighbors {
    pub size: usize,
    pub seed: u64,
}

impl NeighborSampler for SampledNeighbors {
    fn neighbors(&self, g: &HeteroGraph, node: usize, layer: usize) -> Vec<usize> {
        let mut r = rng::keyed(&[self.seed, layer as u64, node as u64]);
        sample_neighbors(g, node, self.size, &mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> HeteroGraph {
        // 0 - 1, 0 - 2, node 3 isolated
        HeteroGraph::new(vec![0; 4], vec!["n".into()], None, vec!["e".into()], &[(0, 0, 1), (0, 0, 2)]).unwrap()
    }

    #[test]
    fn single_neighbor_repeats() {
        let mut r = rng::stream(1, 0);
        assert_eq!(sample_neighbors(&star(), 1, 8, &mut r), vec![0; 8]);
    }

    #[test]
    fn isolated_node_samples_itself() {
        let mut r = rng::stream(1, 0);
        assert_eq!(sample_neighbors(&star(), 3, 4, &mut r), vec![3; 4]);
    }

    #[test]
    fn two_neighbors_are_balanced() {
        let mut r = rng::stream(42, 0);
        let s = sample_neighbors(&star(), 0, 1000, &mut r);
        assert_eq!(s.len(), 1000);
        let freq = s.iter().filter(|&&v| v == 1).count() as f64 / 1000.0;
        assert!((0.45..=0.55).contains(&freq), "frequency {freq}");
    }

    #[test]
    fn sampler_is_deterministic_per_node() {
        let s = SampledNeighbors { size: 5, seed: 9 };
        let g = star();
        assert_eq!(s.neighbors(&g, 0, 1), s.neighbors(&g, 0, 1));
    }
}
