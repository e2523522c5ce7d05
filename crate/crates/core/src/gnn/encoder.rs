use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NeighborSampler};
use crate::tensor::{ParamSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gcn,
    Sgc,
    Gin,
    Gat,
}

fn default_layers() -> usize {
    2
}
fn default_dim() -> usize {
    16
}
fn default_hops() -> usize {
    2
}
fn default_slope() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_dim")]
    pub out_dim: usize,
    /// Propagation steps for SGC.
    #[serde(default = "default_hops")]
    pub sgc_hops: usize,
    /// Width of the learned per-node-type inputs on featureless graphs.
    #[serde(default = "default_dim")]
    pub type_embedding_dim: usize,
    #[serde(default)]
    pub gin_eps: f64,
    #[serde(default = "default_slope")]
    pub gat_slope: f64,
}

impl EncoderConfig {
    pub fn new(kind: EncoderKind) -> Self {
        Self {
            kind,
            layers: default_layers(),
            hidden_dim: default_dim(),
            out_dim: default_dim(),
            sgc_hops: default_hops(),
            type_embedding_dim: default_dim(),
            gin_eps: 0.0,
            gat_slope: default_slope(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("encoder.layers must be at least 1".into()));
        }
        if self.hidden_dim == 0 || self.out_dim == 0 || self.type_embedding_dim == 0 {
            return Err(Error::Config("encoder dimensions must be at least 1".into()));
        }
        Ok(())
    }

    /// Neighbourhood depth the encoder reads.
    pub fn hops(&self) -> usize {
        match self.kind {
            EncoderKind::Sgc => self.sgc_hops,
            _ => self.layers,
        }
    }
}

/// Attention weights of one GAT layer: entry `i` is the weight target
/// `targets[i]` gives to node `sources[i]`.
#[derive(Clone, Debug)]
pub struct Attention {
    pub alpha: Var,
    pub targets: Vec<usize>,
    pub sources: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Encoded {
    /// `[batch, out_dim]`, rows aligned with the requested batch.
    pub z: Var,
    pub attention: Vec<Attention>,
}

/// Sampled computation graph for one hop.
struct Block {
    /// Rows of this hop's output; a prefix of the previous frontier.
    num_targets: usize,
    target_nodes: Vec<usize>,
    /// Neighbour slots: position in the previous frontier and target index.
    src: Vec<usize>,
    dst: Vec<usize>,
    src_nodes: Vec<usize>,
    /// `deg(v) / S` for the slot's target.
    scale: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    cfg: EncoderConfig,
    in_dim: usize,
    num_node_types: usize,
    featureless: bool,
}

impl Encoder {
    pub fn new(cfg: &EncoderConfig, g: &HeteroGraph) -> Result<Self> {
        cfg.validate()?;
        let (in_dim, featureless) = match g.feature_dim() {
            Some(f) => (f, false),
            None => (cfg.type_embedding_dim, true),
        };
        Ok(Self {
            cfg: cfg.clone(),
            in_dim,
            num_node_types: g.node_type_names().len(),
            featureless,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn out_dim(&self) -> usize {
        self.cfg.out_dim
    }

    fn dims(&self) -> Vec<usize> {
        let l = self.cfg.layers;
        let mut d = vec![self.in_dim];
        d.extend(std::iter::repeat_n(self.cfg.hidden_dim, l - 1));
        d.push(self.cfg.out_dim);
        d
    }

    pub fn init_params(&self, rng: &mut impl Rng) -> ParamSet {
        let mut p = ParamSet::new();
        if self.featureless {
            p.push_normal("input.type_emb", self.num_node_types, self.in_dim, 1.0, rng);
        }
        match self.cfg.kind {
            EncoderKind::Sgc => {
                p.push_glorot("sgc.w", self.in_dim, self.cfg.out_dim, rng);
                p.push_zeros("sgc.b", 1, self.cfg.out_dim);
            }
            kind => {
                for (l, w) in self.dims().windows(2).enumerate() {
                    let (a, b) = (w[0], w[1]);
                    match kind {
                        EncoderKind::Gcn => {
                            p.push_glorot(format!("gcn{l}.w"), a, b, rng);
                            p.push_zeros(format!("gcn{l}.b"), 1, b);
                        }
                        EncoderKind::Gin => {
                            p.push_glorot(format!("gin{l}.w1"), a, b, rng);
                            p.push_zeros(format!("gin{l}.b1"), 1, b);
                            p.push_glorot(format!("gin{l}.w2"), b, b, rng);
                            p.push_zeros(format!("gin{l}.b2"), 1, b);
                        }
                        EncoderKind::Gat => {
                            p.push_glorot(format!("gat{l}.w"), a, b, rng);
                            p.push_glorot(format!("gat{l}.a_src"), b, 1, rng);
                            p.push_glorot(format!("gat{l}.a_dst"), b, 1, rng);
                            p.push_zeros(format!("gat{l}.b"), 1, b);
                        }
                        EncoderKind::Sgc => unreachable!(),
                    }
                }
            }
        }
        p
    }

    fn blocks(&self, g: &HeteroGraph, batch: &[usize], sampler: &dyn NeighborSampler) -> (Vec<usize>, Vec<Block>) {
        let hops = self.cfg.hops();
        let mut frontier: Vec<usize> = Vec::new();
        let mut pos: HashMap<usize, usize> = HashMap::new();
        for &v in batch {
            pos.entry(v).or_insert_with(|| {
                frontier.push(v);
                frontier.len() - 1
            });
        }
        let mut blocks = Vec::with_capacity(hops);
        for layer in (1..=hops).rev() {
            let targets = frontier.clone();
            let mut block = Block {
                num_targets: targets.len(),
                target_nodes: targets.clone(),
                src: Vec::new(),
                dst: Vec::new(),
                src_nodes: Vec::new(),
                scale: Vec::new(),
            };
            for (i, &v) in targets.iter().enumerate() {
                let samples = sampler.neighbors(g, v, layer);
                if samples.is_empty() {
                    continue;
                }
                let scale = g.degree(v) as f64 / samples.len() as f64;
                for u in samples {
                    let p = *pos.entry(u).or_insert_with(|| {
                        frontier.push(u);
                        frontier.len() - 1
                    });
                    block.src.push(p);
                    block.dst.push(i);
                    block.src_nodes.push(u);
                    block.scale.push(scale);
                }
            }
            blocks.push(block);
        }
        blocks.reverse();
        (frontier, blocks)
    }

    fn input(&self, tape: &mut Tape, params: &[Var], g: &HeteroGraph, nodes: &[usize]) -> Result<Var> {
        if self.featureless {
            let types = nodes.iter().map(|&v| g.node_type(v)).collect();
            tape.gather_rows(params[0], types)
        } else {
            let rows: Vec<Vec<f64>> = nodes
                .iter()
                .map(|&v| g.features(v).expect("feature graph").to_vec())
                .collect();
            Ok(tape.constant(Tensor::from_rows(&rows)?))
        }
    }

    /// `self_coef[i] * h[i] + Σ_slots coef * h[src]` for each target.
    fn aggregate(tape: &mut Tape, h: Var, block: &Block, self_coef: Vec<f64>, slot_coef: Vec<f64>) -> Result<Var> {
        let n = block.num_targets;
        let own = tape.gather_rows(h, (0..n).collect())?;
        let c = tape.constant(Tensor::column(self_coef));
        let own = tape.mul(own, c)?;
        if block.src.is_empty() {
            return Ok(own);
        }
        let nb = tape.gather_rows(h, block.src.clone())?;
        let c = tape.constant(Tensor::column(slot_coef));
        let nb = tape.mul(nb, c)?;
        let nb = tape.scatter_add_rows(nb, block.dst.clone(), n)?;
        tape.add(own, nb)
    }

    fn gcn_propagate(tape: &mut Tape, g: &HeteroGraph, h: Var, block: &Block) -> Result<Var> {
        let dhat = |v: usize| g.degree(v) as f64 + 1.0;
        let self_coef = block.target_nodes.iter().map(|&v| 1.0 / dhat(v)).collect();
        let slot_coef = block
            .dst
            .iter()
            .zip(&block.src_nodes)
            .zip(&block.scale)
            .map(|((&i, &u), s)| s / (dhat(block.target_nodes[i]) * dhat(u)).sqrt())
            .collect();
        Self::aggregate(tape, h, block, self_coef, slot_coef)
    }

    fn gat_layer(&self, tape: &mut Tape, p: &[Var], h: Var, block: &Block, att: &mut Vec<Attention>) -> Result<Var> {
        let (w, a_src, a_dst, b) = (p[0], p[1], p[2], p[3]);
        let n = block.num_targets;
        let z = tape.matmul(h, w)?;
        // slots are self followed by the sampled neighbours
        let mut src: Vec<usize> = (0..n).collect();
        let mut dst: Vec<usize> = (0..n).collect();
        src.extend(&block.src);
        dst.extend(&block.dst);
        let s_src = tape.matmul(z, a_src)?;
        let s_dst = tape.matmul(z, a_dst)?;
        let e_src = tape.gather_rows(s_src, src.clone())?;
        let e_dst = tape.gather_rows(s_dst, dst.clone())?;
        let e = tape.add(e_src, e_dst)?;
        let e = tape.leaky_relu(e, self.cfg.gat_slope)?;
        let alpha = tape.segment_softmax(e, dst.clone())?;
        let msg = tape.gather_rows(z, src.clone())?;
        let msg = tape.mul(msg, alpha)?;
        let out = tape.scatter_add_rows(msg, dst.clone(), n)?;
        let mut sources: Vec<usize> = block.target_nodes.clone();
        sources.extend(&block.src_nodes);
        att.push(Attention {
            alpha,
            targets: dst.iter().map(|&i| block.target_nodes[i]).collect(),
            sources,
        });
        tape.add(out, b)
    }

    /// Embeddings for `batch` over the neighbourhoods chosen by `sampler`.
    ///
    /// `params` are the registered vars of [`Encoder::init_params`], in order.
    pub fn encode(
        &self,
        tape: &mut Tape,
        params: &[Var],
        g: &HeteroGraph,
        batch: &[usize],
        sampler: &dyn NeighborSampler,
    ) -> Result<Encoded> {
        if batch.is_empty() {
            return Err(Error::invalid("encode on an empty batch"));
        }
        if let Some(&bad) = batch.iter().find(|&&v| v >= g.num_nodes()) {
            return Err(Error::invalid(format!("node {bad} out of range")));
        }
        let (frontier, blocks) = self.blocks(g, batch, sampler);
        let mut h = self.input(tape, params, g, &frontier)?;
        let p = if self.featureless { &params[1..] } else { params };
        let mut attention = Vec::new();
        let last = blocks.len().saturating_sub(1);
        match self.cfg.kind {
            EncoderKind::Sgc => {
                for block in &blocks {
                    h = Self::gcn_propagate(tape, g, h, block)?;
                }
                h = tape.linear(h, p[0], p[1])?;
            }
            EncoderKind::Gcn => {
                for (l, block) in blocks.iter().enumerate() {
                    h = Self::gcn_propagate(tape, g, h, block)?;
                    h = tape.linear(h, p[2 * l], p[2 * l + 1])?;
                    if l < last {
                        h = tape.relu(h)?;
                    }
                }
            }
            EncoderKind::Gin => {
                for (l, block) in blocks.iter().enumerate() {
                    let own = vec![1.0 + self.cfg.gin_eps; block.num_targets];
                    let slots = block.scale.clone();
                    h = Self::aggregate(tape, h, block, own, slots)?;
                    let q = &p[4 * l..4 * l + 4];
                    h = tape.linear(h, q[0], q[1])?;
                    h = tape.relu(h)?;
                    h = tape.linear(h, q[2], q[3])?;
                    if l < last {
                        h = tape.relu(h)?;
                    }
                }
            }
            EncoderKind::Gat => {
                for (l, block) in blocks.iter().enumerate() {
                    h = self.gat_layer(tape, &p[4 * l..4 * l + 4], h, block, &mut attention)?;
                    if l < last {
                        h = tape.relu(h)?;
                    }
                }
            }
        }
        // frontier positions of the batch (first occurrence order)
        let mut first: HashMap<usize, usize> = HashMap::new();
        for (i, &v) in frontier.iter().enumerate() {
            first.entry(v).or_insert(i);
        }
        let rows = batch.iter().map(|v| first[v]).collect();
        let z = tape.gather_rows(h, rows)?;
        Ok(Encoded { z, attention })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{FullNeighbors, SampledNeighbors};
    use crate::rng;

    fn featured(n: usize, dim: usize, edges: &[(usize, usize)]) -> HeteroGraph {
        let mut r = rng::stream(9, 0);
        let feats = (0..n).map(|_| (0..dim).map(|_| r.random::<f64>() - 0.5).collect()).collect();
        let e: Vec<_> = edges.iter().map(|&(u, v)| (u, 0, v)).collect();
        HeteroGraph::new(vec![0; n], vec!["n".into()], Some(feats), vec!["e".into()], &e).unwrap()
    }

    fn run(enc: &Encoder, p: &ParamSet, g: &HeteroGraph, batch: &[usize], s: &dyn NeighborSampler) -> Tensor {
        let mut tape = Tape::new();
        let vars = p.register(&mut tape);
        let out = enc.encode(&mut tape, &vars, g, batch, s).unwrap();
        tape.value(out.z).clone()
    }

    #[test]
    fn sgc_zero_hops_is_linear_map() {
        let g = featured(4, 3, &[(0, 1), (1, 2)]);
        let mut cfg = EncoderConfig::new(EncoderKind::Sgc);
        cfg.sgc_hops = 0;
        cfg.out_dim = 2;
        let enc = Encoder::new(&cfg, &g).unwrap();
        let p = enc.init_params(&mut rng::stream(1, 0));
        let z = run(&enc, &p, &g, &[2, 0], &FullNeighbors);
        let x = Tensor::from_rows(&[g.features(2).unwrap().to_vec(), g.features(0).unwrap().to_vec()]).unwrap();
        let want = x.matmul(p.get(0)).unwrap();
        assert_eq!(z, want);
    }

    #[test]
    fn gin_isolated_node_is_mlp_of_itself() {
        let g = featured(2, 3, &[]);
        let mut cfg = EncoderConfig::new(EncoderKind::Gin);
        cfg.layers = 1;
        cfg.out_dim = 2;
        let enc = Encoder::new(&cfg, &g).unwrap();
        let p = enc.init_params(&mut rng::stream(2, 0));
        let z = run(&enc, &p, &g, &[1], &SampledNeighbors { size: 4, seed: 0 });
        let x = Tensor::from_rows(&[g.features(1).unwrap().to_vec()]).unwrap();
        let h = x.matmul(p.get(0)).unwrap().map(|v| v.max(0.0));
        let want = h.matmul(p.get(2)).unwrap();
        assert_eq!(z, want);
    }

    #[test]
    fn duplicate_batch_rows_repeat() {
        let g = featured(3, 2, &[(0, 1)]);
        let enc = Encoder::new(&EncoderConfig::new(EncoderKind::Gcn), &g).unwrap();
        let p = enc.init_params(&mut rng::stream(3, 0));
        let z = run(&enc, &p, &g, &[1, 0, 1], &FullNeighbors);
        assert_eq!(z.row(0), z.row(2));
    }

    #[test]
    fn featureless_graph_uses_type_embeddings() {
        let g = HeteroGraph::new(vec![0, 1, 1], vec!["a".into(), "b".into()], None, vec!["e".into()], &[(0, 0, 1)]).unwrap();
        let enc = Encoder::new(&EncoderConfig::new(EncoderKind::Gat), &g).unwrap();
        let p = enc.init_params(&mut rng::stream(4, 0));
        assert_eq!(p.names()[0], "input.type_emb");
        assert_eq!(p.get(0).shape(), &[2, 16]);
        let z = run(&enc, &p, &g, &[0, 1, 2], &FullNeighbors);
        assert_eq!(z.shape(), &[3, 16]);
    }

    #[test]
    fn config_rejects_zero_layers() {
        let mut cfg = EncoderConfig::new(EncoderKind::Gcn);
        cfg.layers = 0;
        assert!(cfg.validate().is_err());
    }
}
