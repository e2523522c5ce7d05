//! Configured, seeded experiment runs and their reports.
//!
//! A run directory holds one `seed-<n>` directory per seed (metrics,
//! summary, task ranking, weight curves, best checkpoint and manifest) and
//! an `aggregate.csv` with mean and population standard deviation across
//! seeds.

mod config;
mod data;
mod report;
mod runner;

use std::path::{Path, PathBuf};

pub use config::{
    parse_json, AuxTaskConfig, DatasetSource, GenConfig, PrimaryTaskConfig, RunConfig, SelarParams,
    WeightCurveConfig,
};
pub use data::{build_aux, build_primary, load_dataset, Dataset, DroppedTask, Evaluation, PrimarySetup};
pub use report::{collect_runs, compare, report, ComparisonRow, ComparisonTable, RunRecord};
pub use runner::{
    aggregate_csv, create_dir, evaluate, run_experiment, thread_limit, train_seed, write_atomic, Artifacts,
    Manifest, RunOutcome, SeedRun, SplitSizes, TaskEntry,
};

use crate::error::Result;
use crate::graph::{generate_synthetic, write_graph, write_labels};

/// Writes `nodes.tsv`, `edges.tsv` and, with planted communities,
/// `labels.tsv` into `out`. Returns the written paths.
pub fn generate_files(cfg: &GenConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let s = generate_synthetic(&cfg.generator, cfg.seed)?;
    create_dir(out)?;
    let (nodes, edges) = write_graph(&s.graph);
    let mut files = vec![(out.join("nodes.tsv"), nodes), (out.join("edges.tsv"), edges)];
    if let Some(c) = &s.communities {
        let labels: Vec<(usize, usize)> = c.iter().copied().enumerate().collect();
        files.push((out.join("labels.tsv"), write_labels(&labels)));
    }
    for (path, text) in &files {
        write_atomic(path, text.as_bytes())?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
