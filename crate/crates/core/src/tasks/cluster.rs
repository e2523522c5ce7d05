use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;

use super::{Example, HeadKind, LabeledSet, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after the initial assignment and after every iteration.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(p, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assign: &[usize]) -> f64 {
    points.iter().zip(assign).map(|(p, &c)| sq_dist(p, &centroids[c])).sum()
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let next = match WeightedIndex::new(&d) {
            Ok(w) => w.sample(rng),
            // every point coincides with a centroid
            Err(_) => rng.random_range(0..points.len()),
        };
        centroids.push(points[next].clone());
    }
    centroids
}

/// Lloyd iterations from a k-means++ start. An empty cluster is re-seeded
/// at the point farthest from its current centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut impl Rng) -> Result<KMeans> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k-means with k={k} on {n} points")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("k-means points have mixed dimensions"));
    }
    let mut centroids = plus_plus(points, k, rng);
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = vec![inertia(points, &centroids, &assign)];
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assign) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&points[a], &centroids[assign[a]]).total_cmp(&sq_dist(&points[b], &centroids[assign[b]]))
                    })
                    .expect("non-empty");
                counts[assign[far]] -= 1;
                assign[far] = c;
                counts[c] = 1;
                centroids[c] = points[far].clone();
            }
        }
        let next: Vec<usize> = points
            .iter()
            .zip(&assign)
            .map(|(p, &cur)| {
                let (c, d) = nearest(p, &centroids);
                // keep the current cluster on ties so the loop can stop
                if d < sq_dist(p, &centroids[cur]) {
                    c
                } else {
                    cur
                }
            })
            .collect();
        let changed = next != assign;
        assign = next;
        history.push(inertia(points, &centroids, &assign));
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        assignments: assign,
        centroids,
        inertia_history: history,
    })
}

/// Node features, or row-normalised union adjacency rows when absent.
pub fn clustering_features(g: &HeteroGraph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    (0..n)
        .map(|v| match g.features(v) {
            Some(f) => f.to_vec(),
            None => {
                let mut row = vec![0.0; n];
                let nbrs = g.union_neighbors(v);
                for &u in nbrs {
                    row[u] += 1.0 / nbrs.len() as f64;
                }
                row
            }
        })
        .collect()
}

pub fn clustering_labels(g: &HeteroGraph, k: usize, max_iter: usize, id: usize, rng: &mut impl Rng) -> Result<LabeledSet> {
    let km = kmeans(&clustering_features(g), k, max_iter, rng)?;
    // a single cluster still yields a valid two-class head
    let spec = TaskSpec::new(id, "clustering", TaskKind::Clustering, HeadKind::NodeMulticlass, k.max(2))?;
    LabeledSet::new(
        spec,
        km.assignments.iter().enumerate().map(|(v, &c)| Example::node(v, c)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn k_one_labels_everything_zero() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0]];
        let km = kmeans(&pts, 1, 10, &mut rng::stream(0, 0)).unwrap();
        assert_eq!(km.assignments, vec![0, 0, 0]);
        assert_eq!(km.centroids, vec![vec![2.0]]);
    }

    #[test]
    fn too_many_clusters() {
        assert!(kmeans(&[vec![0.0]], 2, 10, &mut rng::stream(0, 0)).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = vec![vec![1.0]; 4];
        let km = kmeans(&pts, 3, 10, &mut rng::stream(0, 0)).unwrap();
        assert_eq!(km.assignments.len(), 4);
        assert!(km.inertia_history.iter().all(|&i| i == 0.0));
    }
}
