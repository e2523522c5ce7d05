//! Shared fixtures for the benchmarks.

use selar_core::experiment::{build_aux, build_primary, load_dataset, PrimarySetup, RunConfig};
use selar_core::tasks::build_task_registry;
use selar_core::{HeteroGraph, SplitAssignment, TaskRegistry};

pub struct Workload {
    pub graph: HeteroGraph,
    pub registry: TaskRegistry,
    pub split: SplitAssignment,
}

/// The bundled movie scenario with its two meta-path tasks.
pub fn movies() -> Workload {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/movies.json");
    let cfg = RunConfig::load(path).expect("bundled config");
    let data = load_dataset(&cfg.dataset).expect("dataset");
    let PrimarySetup { set, split, graph, .. } =
        build_primary(&data, &cfg.primary, cfg.split, cfg.selar.meta_folds, 0).expect("primary task");
    let (sets, _) = build_aux(&graph, &cfg.aux, 0).expect("aux tasks");
    Workload { registry: build_task_registry(set, sets).expect("registry"), split, graph }
}
