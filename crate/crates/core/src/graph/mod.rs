//! Heterogeneous graph model.

mod io;
mod sampling;
mod splits;
mod synthetic;

pub use io::{load_graph, load_labels, write_graph, write_labels};
pub use sampling::{sample_neighbors, FullNeighbors, NeighborSampler, SampledNeighbors};
pub use splits::{make_splits, SplitAssignment};
pub use synthetic::{generate_synthetic, EdgeTypeSpec, FeatureSpec, GeneratorConfig, NodeTypeSpec, SyntheticGraph};

use crate::error::{Error, Result};

/// Compressed adjacency: `targets[offsets[v]..offsets[v + 1]]` are the
/// neighbours of `v`, sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Csr {
    fn build(num_nodes: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> Self {
        let mut counts = vec![0usize; num_nodes + 1];
        for (u, _) in pairs.clone() {
            counts[u + 1] += 1;
        }
        for i in 0..num_nodes {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut targets = vec![0; offsets[num_nodes]];
        for (u, v) in pairs {
            targets[fill[u]] = v;
            fill[u] += 1;
        }
        for u in 0..num_nodes {
            targets[offsets[u]..offsets[u + 1]].sort_unstable();
        }
        Self { offsets, targets }
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.offsets.len() - 1).flat_map(move |u| self.neighbors(u).iter().map(move |&v| (u, v)))
    }
}

/// Typed nodes and typed directed edges, stored in both directions.
#[derive(Clone, Debug)]
pub struct HeteroGraph {
    num_nodes: usize,
    node_type: Vec<usize>,
    node_type_names: Vec<String>,
    feature_dim: Option<usize>,
    features: Vec<f64>,
    edge_type_names: Vec<String>,
    forward: Vec<Csr>,
    reverse: Vec<Csr>,
    union: Csr,
}

impl HeteroGraph {
    /// Builds a graph from typed nodes and `(src, edge_type, dst)` triples.
    pub fn new(
        node_type: Vec<usize>,
        node_type_names: Vec<String>,
        features: Option<Vec<Vec<f64>>>,
        edge_type_names: Vec<String>,
        edges: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let n = node_type.len();
        if let Some(&bad) = node_type.iter().find(|&&t| t >= node_type_names.len()) {
            return Err(Error::Graph(format!("node type id {bad} has no name")));
        }
        let (feature_dim, flat) = match features {
            None => (None, Vec::new()),
            Some(rows) => {
                if rows.len() != n {
                    return Err(Error::Graph(format!("{} feature rows for {n} nodes", rows.len())));
                }
                let dim = rows.first().map_or(0, Vec::len);
                if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
                    return Err(Error::Graph(format!("node {i} has {} features, expected {dim}", r.len())));
                }
                (Some(dim), rows.into_iter().flatten().collect())
            }
        };
        for &(u, t, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!("edge ({u}, {v}) has endpoint >= {n}")));
            }
            if t >= edge_type_names.len() {
                return Err(Error::Graph(format!("edge type id {t} has no name")));
            }
        }
        let k = edge_type_names.len();
        let forward = (0..k)
            .map(|t| Csr::build(n, edges.iter().filter(move |e| e.1 == t).map(|e| (e.0, e.2))))
            .collect();
        let reverse = (0..k)
            .map(|t| Csr::build(n, edges.iter().filter(move |e| e.1 == t).map(|e| (e.2, e.0))))
            .collect();
        let union = Csr::build(n, edges.iter().flat_map(|e| [(e.0, e.2), (e.2, e.0)]));
        Ok(Self {
            num_nodes: n,
            node_type,
            node_type_names,
            feature_dim,
            features: flat,
            edge_type_names,
            forward,
            reverse,
            union,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn node_type(&self, v: usize) -> usize {
        self.node_type[v]
    }

    pub fn node_types(&self) -> &[usize] {
        &self.node_type
    }

    pub fn node_type_names(&self) -> &[String] {
        &self.node_type_names
    }

    pub fn node_type_id(&self, name: &str) -> Option<usize> {
        self.node_type_names.iter().position(|n| n == name)
    }

    pub fn nodes_of_type(&self, t: usize) -> Vec<usize> {
        (0..self.num_nodes).filter(|&v| self.node_type[v] == t).collect()
    }

    pub fn num_edge_types(&self) -> usize {
        self.edge_type_names.len()
    }

    pub fn edge_type_names(&self) -> &[String] {
        &self.edge_type_names
    }

    pub fn edge_type_id(&self, name: &str) -> Option<usize> {
        self.edge_type_names.iter().position(|n| n == name)
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn features(&self, v: usize) -> Option<&[f64]> {
        self.feature_dim.map(|d| &self.features[v * d..(v + 1) * d])
    }

    pub fn forward(&self, edge_type: usize) -> &Csr {
        &self.forward[edge_type]
    }

    pub fn reverse(&self, edge_type: usize) -> &Csr {
        &self.reverse[edge_type]
    }

    /// Neighbours over all edge types and both directions (with multiplicity).
    pub fn union_neighbors(&self, v: usize) -> &[usize] {
        self.union.neighbors(v)
    }

    /// Undirected degree `d(v) = Σ_j A_vj` over the union adjacency.
    pub fn degree(&self, v: usize) -> usize {
        self.union.degree(v)
    }

    pub fn num_edges(&self) -> usize {
        self.forward.iter().map(Csr::num_edges).sum()
    }

    /// All `(src, edge_type, dst)` triples, grouped by type.
    pub fn edges(&self) -> Vec<(usize, usize, usize)> {
        self.forward
            .iter()
            .enumerate()
            .flat_map(|(t, csr)| csr.iter().map(move |(u, v)| (u, t, v)))
            .collect()
    }

    pub fn has_edge(&self, edge_type: usize, u: usize, v: usize) -> bool {
        self.forward[edge_type].contains(u, v)
    }

    /// Node types seen at the source / destination end of an edge type.
    pub fn endpoint_types(&self, edge_type: usize) -> (Vec<usize>, Vec<usize>) {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for (u, v) in self.forward[edge_type].iter() {
            if !src.contains(&self.node_type[u]) {
                src.push(self.node_type[u]);
            }
            if !dst.contains(&self.node_type[v]) {
                dst.push(self.node_type[v]);
            }
        }
        src.sort_unstable();
        dst.sort_unstable();
        (src, dst)
    }

    /// Copy of the graph without the listed `(src, edge_type, dst)` edges.
    pub fn without_edges(&self, removed: &[(usize, usize, usize)]) -> Result<Self> {
        let mut drop: Vec<(usize, usize, usize)> = removed.to_vec();
        drop.sort_unstable();
        let kept: Vec<_> = self
            .edges()
            .into_iter()
            .filter(|e| drop.binary_search(e).is_err())
            .collect();
        let features = self
            .feature_dim
            .map(|_| (0..self.num_nodes).map(|v| self.features(v).unwrap().to_vec()).collect());
        Self::new(
            self.node_type.clone(),
            self.node_type_names.clone(),
            features,
            self.edge_type_names.clone(),
            &kept,
        )
    }

    /// Relabels node `v` as `perm[v]`; used for equivariance checks.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        if perm.len() != n {
            return Err(Error::invalid("permutation length differs from node count"));
        }
        let mut node_type = vec![0; n];
        let mut features = self.feature_dim.map(|_| vec![Vec::new(); n]);
        for v in 0..n {
            node_type[perm[v]] = self.node_type[v];
            if let Some(f) = features.as_mut() {
                f[perm[v]] = self.features(v).unwrap().to_vec();
            }
        }
        let edges: Vec<_> = self.edges().into_iter().map(|(u, t, v)| (perm[u], t, perm[v])).collect();
        Self::new(node_type, self.node_type_names.clone(), features, self.edge_type_names.clone(), &edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> HeteroGraph {
        HeteroGraph::new(
            vec![0, 0, 1],
            vec!["a".into(), "b".into()],
            None,
            vec!["r".into(), "s".into()],
            &[(0, 0, 1), (1, 0, 2), (0, 1, 2)],
        )
        .unwrap()
    }

    #[test]
    fn reverse_is_transpose() {
        let g = tiny();
        for t in 0..g.num_edge_types() {
            for (u, v) in g.forward(t).iter() {
                assert!(g.reverse(t).contains(v, u));
            }
            assert_eq!(g.forward(t).num_edges(), g.reverse(t).num_edges());
        }
    }

    #[test]
    fn union_degree_counts_both_directions() {
        let g = tiny();
        assert_eq!((0..3).map(|v| g.degree(v)).collect::<Vec<_>>(), vec![2, 2, 2]);
    }

    #[test]
    fn rejects_dangling_endpoint() {
        let err = HeteroGraph::new(vec![0; 2], vec!["a".into()], None, vec!["r".into()], &[(0, 0, 5)]);
        assert!(err.is_err());
    }

    #[test]
    fn without_edges_drops_only_listed() {
        let g = tiny().without_edges(&[(0, 0, 1)]).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(!g.has_edge(0, 0, 1));
        assert!(g.has_edge(0, 1, 2));
    }
}
