//! Seeded generator for small heterogeneous graphs with planted communities.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::HeteroGraph;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTypeSpec {
    pub name: String,
    pub count: usize,
}

/// One edge type. Exactly one edge rule must be given: a uniform `density`,
/// a planted `within`/`across` pair, or `mirror` (the transpose of another
/// edge type).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeTypeSpec {
    pub name: String,
    pub src: String,
    pub dst: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub across: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror: Option<String>,
}

/// Gaussian features around a per-community centroid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub dim: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub node_types: Vec<NodeTypeSpec>,
    /// Number of planted communities; 0 disables planting.
    #[serde(default)]
    pub communities: usize,
    pub edge_types: Vec<EdgeTypeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureSpec>,
}

#[derive(Clone, Debug)]
pub struct SyntheticGraph {
    pub graph: HeteroGraph,
    /// Planted community of every node, when communities were requested.
    pub communities: Option<Vec<usize>>,
}

enum Rule {
    Uniform(f64),
    Planted(f64, f64),
    Mirror(usize),
}

fn check_prob(name: &str, what: &str, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("edge type {name}: {what} {p} outside [0, 1]")));
    }
    Ok(p)
}

pub fn generate_synthetic(cfg: &GeneratorConfig, seed: u64) -> Result<SyntheticGraph> {
    let type_id = |name: &str| {
        cfg.node_types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Config(format!("unknown node type {name:?}")))
    };
    let mut node_type = Vec::new();
    for (t, spec) in cfg.node_types.iter().enumerate() {
        node_type.extend(std::iter::repeat_n(t, spec.count));
    }
    let n = node_type.len();
    let members: Vec<Vec<usize>> = (0..cfg.node_types.len())
        .map(|t| (0..n).filter(|&v| node_type[v] == t).collect())
        .collect();

    let communities = (cfg.communities > 0).then(|| {
        let mut comm = vec![0; n];
        let mut r = rng::keyed(&[seed, 0xC0]);
        for nodes in &members {
            let mut order = nodes.clone();
            order.shuffle(&mut r);
            for (i, v) in order.into_iter().enumerate() {
                comm[v] = i % cfg.communities;
            }
        }
        comm
    });

    let mut rules = Vec::with_capacity(cfg.edge_types.len());
    for spec in &cfg.edge_types {
        let src = type_id(&spec.src)?;
        let dst = type_id(&spec.dst)?;
        let rule = match (spec.density, spec.within, spec.across, &spec.mirror) {
            (Some(d), None, None, None) => Rule::Uniform(check_prob(&spec.name, "density", d)?),
            (None, Some(w), Some(a), None) => {
                if communities.is_none() {
                    return Err(Error::Config(format!(
                        "edge type {}: within/across densities need communities > 0",
                        spec.name
                    )));
                }
                Rule::Planted(check_prob(&spec.name, "within", w)?, check_prob(&spec.name, "across", a)?)
            }
            (None, None, None, Some(m)) => {
                let j = cfg
                    .edge_types
                    .iter()
                    .position(|e| &e.name == m)
                    .ok_or_else(|| Error::Config(format!("edge type {}: unknown mirror {m:?}", spec.name)))?;
                let other = &cfg.edge_types[j];
                if other.mirror.is_some() || other.src != spec.dst || other.dst != spec.src {
                    return Err(Error::Config(format!(
                        "edge type {}: mirror {m:?} must be a non-mirror edge type with swapped endpoints",
                        spec.name
                    )));
                }
                Rule::Mirror(j)
            }
            _ => {
                return Err(Error::Config(format!(
                    "edge type {}: give exactly one of density, within+across, mirror",
                    spec.name
                )))
            }
        };
        rules.push((src, dst, rule));
    }

    let mut per_type: Vec<Vec<(usize, usize)>> = vec![Vec::new(); rules.len()];
    for (t, (src, dst, rule)) in rules.iter().enumerate() {
        let mut r = rng::keyed(&[seed, 0xE0, t as u64]);
        let p_of = |u: usize, v: usize| match rule {
            Rule::Uniform(d) => *d,
            Rule::Planted(w, a) => {
                let c = communities.as_ref().expect("checked above");
                if c[u] == c[v] {
                    *w
                } else {
                    *a
                }
            }
            Rule::Mirror(_) => 0.0,
        };
        if matches!(rule, Rule::Mirror(_)) {
            continue;
        }
        for &u in &members[*src] {
            for &v in &members[*dst] {
                if u == v {
                    continue;
                }
                let p = p_of(u, v);
                // Draw even at p = 1 so that the stream does not depend on p.
                let x: f64 = r.random();
                if x < p {
                    per_type[t].push((u, v));
                }
            }
        }
    }
    for (t, (_, _, rule)) in rules.iter().enumerate() {
        if let Rule::Mirror(j) = rule {
            per_type[t] = per_type[*j].iter().map(|&(u, v)| (v, u)).collect();
        }
    }
    let edges: Vec<(usize, usize, usize)> = per_type
        .iter()
        .enumerate()
        .flat_map(|(t, es)| es.iter().map(move |&(u, v)| (u, t, v)))
        .collect();

    let features = cfg.features.as_ref().map(|f| {
        let mut r = rng::keyed(&[seed, 0xF0]);
        let k = cfg.communities.max(1);
        let centroids: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..f.dim).map(|_| StandardNormal.sample(&mut r)).collect())
            .collect();
        (0..n)
            .map(|v| {
                let c = communities.as_ref().map_or(0, |cs| cs[v]);
                let base = if communities.is_some() { &centroids[c][..] } else { &[][..] };
                (0..f.dim)
                    .map(|i| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        base.get(i).copied().unwrap_or(0.0) + f.noise * z
                    })
                    .collect()
            })
            .collect()
    });

    let graph = HeteroGraph::new(
        node_type,
        cfg.node_types.iter().map(|t| t.name.clone()).collect(),
        features,
        cfg.edge_types.iter().map(|e| e.name.clone()).collect(),
        &edges,
    )?;
    Ok(SyntheticGraph { graph, communities })
}
