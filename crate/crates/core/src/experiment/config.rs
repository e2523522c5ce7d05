use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gnn::{EncoderConfig, PairScorer};
use crate::graph::GeneratorConfig;
use crate::metrics::F1Average;
use crate::selar::{JacobianMode, Scheme, SelarConfig};

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("{path}: {}", e.into_inner()))
    })
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        generator: GeneratorConfig,
        #[serde(default)]
        seed: u64,
    },
    Files {
        nodes: PathBuf,
        edges: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<PathBuf>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PrimaryTaskConfig {
    /// Held-out edges of one type against 1:1 corrupted-tail negatives.
    LinkPrediction {
        edge_type: String,
        /// Edge type holding the transposed copies of `edge_type`, removed
        /// alongside held-out edges.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reverse_edge_type: Option<String>,
    },
    NodeClassification {
        /// Restrict to labelled nodes of this type.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node_type: Option<String>,
        #[serde(default)]
        f1: F1Average,
    },
    /// Trained like link prediction, evaluated by Recall@K over all items.
    Recommendation {
        edge_type: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reverse_edge_type: Option<String>,
        #[serde(default = "default_k")]
        k: usize,
    },
}

fn default_k() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AuxTaskConfig {
    Metapath {
        path: Vec<String>,
        #[serde(default = "default_positives")]
        positives: usize,
    },
    Degree {
        #[serde(default = "default_frac")]
        sample_frac: f64,
    },
    Distance {
        #[serde(default = "default_pairs")]
        pairs: usize,
    },
    Pagerank {
        #[serde(default = "default_damping")]
        damping: f64,
        #[serde(default = "default_tol")]
        tol: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_frac")]
        sample_frac: f64,
    },
    Clustering {
        #[serde(default = "default_parts")]
        k: usize,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
    Partition {
        #[serde(default = "default_parts")]
        k: usize,
        #[serde(default = "default_balance")]
        balance_tol: f64,
    },
}

fn default_positives() -> usize {
    200
}
fn default_frac() -> f64 {
    0.5
}
fn default_pairs() -> usize {
    500
}
fn default_damping() -> f64 {
    0.85
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    100
}
fn default_parts() -> usize {
    4
}
fn default_balance() -> f64 {
    0.1
}

/// Optimisation and weighting hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelarParams {
    pub lr: f64,
    pub lr_meta: f64,
    pub lr_inner: f64,
    /// Hint attenuation exponent; only meaningful for `selar-hint`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub meta_folds: usize,
    pub task_dim: usize,
    pub weight_hidden: usize,
    pub batch_primary: usize,
    pub batch_aux: usize,
    pub batch_meta: usize,
    /// `null` aggregates over every neighbour during training.
    pub neighbor_size: Option<usize>,
    pub jacobian: JacobianMode,
}

impl Default for SelarParams {
    fn default() -> Self {
        let d = SelarConfig::default();
        Self {
            lr: d.lr,
            lr_meta: d.lr_meta,
            lr_inner: d.lr_inner,
            gamma: None,
            meta_folds: 3,
            task_dim: d.task_dim,
            weight_hidden: d.weight_hidden,
            batch_primary: d.batch_primary,
            batch_aux: d.batch_aux,
            batch_meta: d.batch_meta,
            neighbor_size: d.neighbor_size,
            jacobian: d.jacobian,
        }
    }
}

impl SelarParams {
    pub fn to_selar_config(&self) -> SelarConfig {
        SelarConfig {
            lr: self.lr,
            lr_meta: self.lr_meta,
            lr_inner: self.lr_inner,
            gamma: self.gamma.unwrap_or(SelarConfig::default().gamma),
            task_dim: self.task_dim,
            weight_hidden: self.weight_hidden,
            batch_primary: self.batch_primary,
            batch_aux: self.batch_aux,
            batch_meta: self.batch_meta,
            neighbor_size: self.neighbor_size,
            jacobian: self.jacobian,
        }
    }
}

/// Loss grid and focal reference for the weight-curve dumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightCurveConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub focal_gamma: f64,
}

impl Default for WeightCurveConfig {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 10.0,
            points: 41,
            focal_gamma: 2.0,
        }
    }
}

fn default_name() -> String {
    "run".into()
}
fn default_epochs() -> usize {
    20
}
fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSource,
    pub primary: PrimaryTaskConfig,
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub scorer: PairScorer,
    pub scheme: Scheme,
    /// Auxiliary tasks; ignored by the primary-only schemes.
    #[serde(default)]
    pub aux: Vec<AuxTaskConfig>,
    #[serde(default)]
    pub selar: SelarParams,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Learner steps per epoch; defaults to one pass over the train pool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_epoch: Option<usize>,
    pub seeds: Vec<u64>,
    /// `[train, valid, test]` fractions of the primary items.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub weight_curve: WeightCurveConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative dataset paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&read_config(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DatasetSource::Files { nodes, edges, labels } = &mut cfg.dataset {
            for p in [Some(nodes), Some(edges), labels.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::Config(format!("{field}: {msg}")));
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required");
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return bad("seeds", "seeds must be distinct");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch", "must be at least 1");
        }
        if let Some(g) = self.selar.gamma {
            if self.scheme != Scheme::SelarHint {
                return bad("selar.gamma", "only valid with scheme selar-hint");
            }
            if !(g > 0.0 && g <= 1.0) {
                return bad("selar.gamma", "must lie in (0, 1]");
            }
        }
        let s = &self.selar;
        for (name, v) in [("selar.lr", s.lr), ("selar.lr_meta", s.lr_meta)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, "must be positive");
            }
        }
        if !(s.lr_inner >= 0.0 && s.lr_inner.is_finite()) {
            return bad("selar.lr_inner", "must be non-negative");
        }
        if s.meta_folds == 0 {
            return bad("selar.meta_folds", "must be at least 1");
        }
        if s.batch_primary == 0 || s.batch_aux == 0 || s.batch_meta == 0 {
            return bad("selar", "batch sizes must be at least 1");
        }
        if s.neighbor_size == Some(0) {
            return bad("selar.neighbor_size", "must be at least 1");
        }
        if self.split.iter().any(|&x| x <= 0.0) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("split", "fractions must be positive and sum to 1");
        }
        if let PrimaryTaskConfig::Recommendation { k: 0, .. } = self.primary {
            return bad("primary.k", "must be at least 1");
        }
        let wc = &self.weight_curve;
        if wc.points == 0 || !(wc.lo.is_finite() && wc.hi.is_finite()) || wc.hi < wc.lo {
            return bad("weight_curve", "needs at least one point on a finite ascending range");
        }
        self.encoder
            .validate()
            .map_err(|e| Error::Config(format!("encoder: {e}")))
    }

    /// Auxiliary tasks the scheme actually trains.
    pub fn active_aux(&self) -> &[AuxTaskConfig] {
        if self.scheme.uses_aux() {
            &self.aux
        } else {
            &[]
        }
    }

    pub fn primary_metric(&self) -> String {
        match &self.primary {
            PrimaryTaskConfig::LinkPrediction { .. } => "auc".into(),
            PrimaryTaskConfig::NodeClassification { f1, .. } => match f1 {
                F1Average::Macro => "macro_f1".into(),
                F1Average::Micro => "micro_f1".into(),
            },
            PrimaryTaskConfig::Recommendation { k, .. } => format!("recall@{k}"),
        }
    }

    /// SHA-256 of the canonical JSON form, defaults included.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Input of `selar gen`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl GenConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        parse_json(&read_config(path.as_ref())?)
    }
}
