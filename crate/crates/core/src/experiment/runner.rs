use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FullNeighbors;
use crate::metrics::{aggregate_runs, auc, f1_score, recall_at_k, MetricReport};
use crate::selar::{
    loss_grid, ranking_csv, task_weight_report, weight_curve_dump, Learner, Scheme, StepLog, TaskBatch, TaskRank,
    Trainer,
};
use crate::tasks::{build_task_registry, HeadKind, TaskKind};
use crate::tensor::{write_checkpoint, Tensor};

use super::config::RunConfig;
use super::data::{build_aux, build_primary, load_dataset, Dataset, DroppedTask, Evaluation, PrimarySetup};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub id: usize,
    pub name: String,
    pub kind: TaskKind,
    pub head: HeadKind,
    pub num_classes: usize,
    pub examples: usize,
    pub skipped: usize,
    pub class_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub meta_folds: Vec<usize>,
}

/// Everything needed to reproduce one seed of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub scheme: Scheme,
    pub model: String,
    pub meta_folds: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub metric: String,
    pub best_epoch: usize,
    /// `(train folds, meta fold)` for each step of one rotation.
    pub fold_schedule: Vec<(Vec<usize>, usize)>,
    pub split: SplitSizes,
    pub removed_edges: usize,
    pub tasks: Vec<TaskEntry>,
    pub dropped: Vec<DroppedTask>,
    pub config: RunConfig,
}

/// File contents produced for one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifacts {
    pub metrics_csv: String,
    pub summary_csv: String,
    pub ranking_csv: String,
    pub weights_first: String,
    pub weights_best: String,
    pub weights_last: String,
    pub checkpoint: Vec<u8>,
    pub manifest_json: String,
}

impl Artifacts {
    pub fn files(&self) -> [(&'static str, &[u8]); 8] {
        [
            ("metrics.csv", self.metrics_csv.as_bytes()),
            ("summary.csv", self.summary_csv.as_bytes()),
            ("task_ranking.csv", self.ranking_csv.as_bytes()),
            ("weights_first.csv", self.weights_first.as_bytes()),
            ("weights_best.csv", self.weights_best.as_bytes()),
            ("weights_last.csv", self.weights_last.as_bytes()),
            ("checkpoint.slrt", &self.checkpoint),
            ("manifest.json", self.manifest_json.as_bytes()),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub metric: String,
    pub best_epoch: usize,
    pub best_valid: f64,
    pub test_at_best: f64,
    /// `(epoch, valid, test)` after every epoch.
    pub history: Vec<(usize, f64, f64)>,
    pub logs: Vec<StepLog>,
    pub ranking: Vec<TaskRank>,
    pub manifest: Manifest,
    pub artifacts: Artifacts,
}

fn batch(setup: &PrimarySetup, idx: &[usize]) -> TaskBatch {
    TaskBatch {
        task: 0,
        examples: idx.iter().map(|&i| setup.set.examples[i]).collect(),
    }
}

/// Primary metric of the current learner on `idx`, with every neighbour.
pub fn evaluate(trainer: &Trainer<'_>, setup: &PrimarySetup, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::Graph("an evaluation split is empty".into()));
    }
    match &setup.evaluation {
        Evaluation::Auc => {
            let b = batch(setup, idx);
            let logits = trainer.logits(&b, &FullNeighbors)?;
            auc(logits.data(), &b.labels())
        }
        Evaluation::F1(average, k) => {
            let b = batch(setup, idx);
            let logits = trainer.logits(&b, &FullNeighbors)?;
            let pred: Vec<usize> = (0..logits.rows())
                .map(|r| {
                    let row = logits.row(r);
                    (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
                })
                .collect();
            f1_score(&pred, &b.labels(), *k, *average)
        }
        Evaluation::Recall { k, edge_type } => recall(trainer, setup, idx, *k, *edge_type),
    }
}

fn recall(trainer: &Trainer<'_>, setup: &PrimarySetup, idx: &[usize], k: usize, t: usize) -> Result<f64> {
    let g = &setup.graph;
    let mut relevant: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut item_type = None;
    for &i in idx {
        let e = setup.set.examples[i];
        if e.label == 1 {
            let v = e.tail.expect("pair example");
            item_type.get_or_insert(g.node_type(v));
            relevant.entry(e.head).or_default().push(v);
        }
    }
    let Some(item_type) = item_type else {
        return Err(Error::Graph("recommendation split has no positive edges".into()));
    };
    let items = g.nodes_of_type(item_type);
    let mut examples = Vec::new();
    let mut spans = Vec::with_capacity(relevant.len());
    for &u in relevant.keys() {
        let seen = g.forward(t).neighbors(u);
        let start = examples.len();
        examples.extend(
            items
                .iter()
                .filter(|v| !seen.contains(v))
                .map(|&v| crate::tasks::Example::pair(u, v, 0)),
        );
        spans.push(start..examples.len());
    }
    let logits = trainer.logits(&TaskBatch { task: 0, examples: examples.clone() }, &FullNeighbors)?;
    let scores = logits.data();
    let ranked: Vec<Vec<usize>> = spans
        .into_iter()
        .map(|span| {
            let mut cand: Vec<(f64, usize)> = span.map(|j| (scores[j], examples[j].tail.unwrap())).collect();
            cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            cand.into_iter().map(|(_, v)| v).collect()
        })
        .collect();
    recall_at_k(&ranked, &relevant.into_values().collect::<Vec<_>>(), k)
}

fn checkpoint_bytes(groups: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_checkpoint(&mut out, groups)?;
    Ok(out)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn model_name(cfg: &RunConfig) -> String {
    serde_json::to_value(cfg.encoder.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Trains and evaluates one seed; nothing is written to disk.
pub fn train_seed(cfg: &RunConfig, data: &Dataset, seed: u64) -> Result<SeedRun> {
    let setup = build_primary(data, &cfg.primary, cfg.split, cfg.selar.meta_folds, seed)?;
    let (aux, dropped) = build_aux(&setup.graph, cfg.active_aux(), seed)?;
    let registry = build_task_registry(setup.set.clone(), aux)?;
    let specs = registry.specs();
    let learner = Learner::gnn(&setup.graph, &cfg.encoder, &specs, cfg.scorer)?;
    let mut trainer = Trainer::new(
        learner,
        &registry,
        &setup.split,
        cfg.scheme,
        cfg.selar.to_selar_config(),
        seed,
    )?;

    let pool = setup.split.fold_plan(0).0.len();
    let steps_per_epoch = cfg
        .steps_per_epoch
        .unwrap_or_else(|| pool.div_ceil(cfg.selar.batch_primary).max(1));
    let metric = cfg.primary_metric();
    let wc = &cfg.weight_curve;
    let grid = loss_grid(wc.lo, wc.hi, wc.points);
    let dump = |t: &Trainer<'_>| weight_curve_dump(&t.vnet, &t.theta, &grid, &specs, wc.focal_gamma);

    let mut metrics_csv = String::from("epoch,split,metric,value\n");
    let mut logs = Vec::with_capacity(cfg.epochs * steps_per_epoch);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut weights_first = String::new();
    let mut best: Option<(usize, f64, f64, String, Vec<u8>)> = None;
    for epoch in 1..=cfg.epochs {
        let start = logs.len();
        for _ in 0..steps_per_epoch {
            logs.push(trainer.step()?);
        }
        let epoch_logs = &logs[start..];
        let valid = evaluate(&trainer, &setup, &setup.split.valid)?;
        let test = evaluate(&trainer, &setup, &setup.split.test)?;
        if !valid.is_finite() || !test.is_finite() {
            return Err(Error::Numeric(format!("non-finite {metric} at epoch {epoch}")));
        }
        let _ = writeln!(metrics_csv, "{epoch},train,loss,{}", mean(epoch_logs.iter().map(|l| l.train_loss)));
        if trainer.meta_learning() {
            let m = mean(epoch_logs.iter().filter_map(|l| l.meta_loss));
            let _ = writeln!(metrics_csv, "{epoch},train,meta_loss,{m}");
        }
        for spec in &specs {
            let m = mean(
                epoch_logs
                    .iter()
                    .flat_map(|l| l.tasks.iter().filter(|t| t.task_id == spec.id))
                    .map(|t| t.mean_weighted_loss),
            );
            let _ = writeln!(metrics_csv, "{epoch},train,weighted_loss:{},{m}", spec.name);
        }
        let _ = writeln!(metrics_csv, "{epoch},valid,{metric},{valid}");
        let _ = writeln!(metrics_csv, "{epoch},test,{metric},{test}");
        history.push((epoch, valid, test));

        if epoch == 1 {
            weights_first = dump(&trainer)?;
        }
        if best.as_ref().is_none_or(|b| valid > b.1) {
            let ckpt = checkpoint_bytes(&trainer.checkpoint_groups())?;
            best = Some((epoch, valid, test, dump(&trainer)?, ckpt));
        }
    }
    let weights_last = dump(&trainer)?;
    let (best_epoch, best_valid, test_at_best, weights_best, checkpoint) = best.expect("at least one epoch");

    let ranking = task_weight_report(&logs, &specs)?;
    let summary_csv = format!("metric,best_epoch,valid,test\n{metric},{best_epoch},{best_valid},{test_at_best}\n");

    let manifest = Manifest {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        seed,
        scheme: cfg.scheme,
        model: model_name(cfg),
        meta_folds: cfg.selar.meta_folds,
        epochs: cfg.epochs,
        steps_per_epoch,
        metric: metric.clone(),
        best_epoch,
        fold_schedule: trainer.plan().schedule(trainer.plan().folds()),
        split: SplitSizes {
            train: setup.split.train.len(),
            valid: setup.split.valid.len(),
            test: setup.split.test.len(),
            meta_folds: setup.split.meta_folds.iter().map(Vec::len).collect(),
        },
        removed_edges: setup.removed_edges,
        tasks: registry
            .tasks()
            .iter()
            .map(|t| TaskEntry {
                id: t.spec.id,
                name: t.spec.name.clone(),
                kind: t.spec.kind,
                head: t.spec.head,
                num_classes: t.spec.num_classes,
                examples: t.len(),
                skipped: t.skipped,
                class_counts: t.class_counts(),
            })
            .collect(),
        dropped,
        config: cfg.clone(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)? + "\n";
    Ok(SeedRun {
        seed,
        metric,
        best_epoch,
        best_valid,
        test_at_best,
        history,
        logs,
        artifacts: Artifacts {
            metrics_csv,
            summary_csv,
            ranking_csv: ranking_csv(&ranking),
            weights_first,
            weights_best,
            weights_last,
            checkpoint,
            manifest_json,
        },
        ranking,
        manifest,
    })
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub seeds: Vec<SeedRun>,
    /// Valid and test aggregates of the primary metric.
    pub aggregate: Vec<(String, MetricReport)>,
}

pub fn aggregate_csv(rows: &[(String, MetricReport)]) -> String {
    let mut s = String::from("metric,split,mean,std,n,values\n");
    for (split, r) in rows {
        let values: Vec<String> = r.values.iter().map(f64::to_string).collect();
        let _ = writeln!(s, "{},{split},{},{},{},{}", r.name, r.mean, r.std, r.n, values.join(";"));
    }
    s
}

/// Worker cap from `SELAR_THREADS`, else the available parallelism.
pub fn thread_limit() -> usize {
    std::env::var("SELAR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Trains every seed (up to `threads` at once), writes one directory per
/// seed under `out` and an `aggregate.csv` across seeds.
pub fn run_experiment(cfg: &RunConfig, out: &Path, threads: usize) -> Result<RunOutcome> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset)?;
    create_dir(out)?;
    let threads = threads.max(1);
    let mut results: Vec<Result<SeedRun>> = Vec::with_capacity(cfg.seeds.len());
    for chunk in cfg.seeds.chunks(threads) {
        let data = &data;
        let chunk_results: Vec<Result<SeedRun>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| s.spawn(move || train_seed(cfg, data, seed)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numeric("training thread panicked".into()))))
                .collect()
        });
        results.extend(chunk_results);
    }
    let seeds: Vec<SeedRun> = results.into_iter().collect::<Result<_>>()?;
    for run in &seeds {
        let dir = out.join(format!("seed-{}", run.seed));
        create_dir(&dir)?;
        for (name, bytes) in run.artifacts.files() {
            write_atomic(&dir.join(name), bytes)?;
        }
    }
    let metric = cfg.primary_metric();
    let mut aggregate = Vec::new();
    for (split, pick) in [("valid", 0), ("test", 1)] {
        let values: Vec<f64> = seeds
            .iter()
            .map(|r| if pick == 0 { r.best_valid } else { r.test_at_best })
            .collect();
        aggregate.push((split.to_owned(), aggregate_runs(metric.clone(), &values)?));
    }
    write_atomic(&out.join("aggregate.csv"), aggregate_csv(&aggregate).as_bytes())?;
    Ok(RunOutcome {
        dir: out.to_path_buf(),
        seeds,
        aggregate,
    })
}
