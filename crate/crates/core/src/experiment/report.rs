use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, MetricReport};
use crate::selar::Scheme;

use super::config::parse_json;
use super::runner::Manifest;

/// Test-split result of one seed directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub dir: PathBuf,
    pub model: String,
    pub scheme: Scheme,
    pub meta_folds: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn corrupt(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: msg.into(),
    }
}

fn load_record(dir: &Path) -> Result<RunRecord> {
    let mpath = dir.join("manifest.json");
    let manifest: Manifest = parse_json(&read(&mpath)?).map_err(|e| corrupt(&mpath, 0, e.to_string()))?;
    let spath = dir.join("summary.csv");
    let text = read(&spath)?;
    let mut lines = text.lines();
    if lines.next() != Some("metric,best_epoch,valid,test") {
        return Err(corrupt(&spath, 1, "unexpected header"));
    }
    let mut metrics = BTreeMap::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let value = (f.len() == 4).then(|| f[3].parse::<f64>().ok()).flatten();
        let Some(value) = value else {
            return Err(corrupt(&spath, i + 2, "expected metric,best_epoch,valid,test"));
        };
        metrics.insert(f[0].to_owned(), value);
    }
    Ok(RunRecord {
        dir: dir.to_path_buf(),
        model: manifest.model,
        scheme: manifest.scheme,
        meta_folds: manifest.meta_folds,
        seed: manifest.seed,
        metrics,
    })
}

/// Seed directories under each argument: the directory itself when it holds
/// a manifest, otherwise every directory below it that does.
pub fn collect_runs(dirs: &[PathBuf]) -> Result<Vec<RunRecord>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for dir in dirs {
        let mut candidates = Vec::new();
        find_manifests(dir, &mut candidates)?;
        for c in candidates {
            let key = c.canonicalize().unwrap_or_else(|_| c.clone());
            if seen.insert(key) {
                out.push(load_record(&c)?);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no completed run directories found"));
    }
    Ok(out)
}

fn find_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join("manifest.json").is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subs.sort();
    for s in subs {
        find_manifests(&s, out)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub model: String,
    pub scheme: Scheme,
    pub meta_folds: usize,
    pub runs: usize,
    /// One cell per table metric; `None` where no run reported it.
    pub cells: Vec<Option<MetricReport>>,
}

/// Rows are `(model, scheme, meta folds)`; columns the union of test metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub metrics: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

pub fn compare(records: &[RunRecord]) -> Result<ComparisonTable> {
    let metrics: Vec<String> = records
        .iter()
        .flat_map(|r| r.metrics.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut groups: BTreeMap<(String, Scheme, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.model.clone(), r.scheme, r.meta_folds)).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((model, scheme, meta_folds), runs) in groups {
        let cells = metrics
            .iter()
            .map(|m| {
                let values: Vec<f64> = runs.iter().filter_map(|r| r.metrics.get(m).copied()).collect();
                (!values.is_empty()).then(|| aggregate_runs(m.clone(), &values)).transpose()
            })
            .collect::<Result<_>>()?;
        rows.push(ComparisonRow {
            model,
            scheme,
            meta_folds,
            runs: runs.len(),
            cells,
        });
    }
    Ok(ComparisonTable { metrics, rows })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,scheme,meta_folds,runs");
        for m in &self.metrics {
            let _ = write!(s, ",{m}_mean,{m}_std");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{}", r.model, r.scheme, r.meta_folds, r.runs);
            for c in &r.cells {
                match c {
                    Some(c) => {
                        let _ = write!(s, ",{},{}", c.mean, c.std);
                    }
                    None => s.push_str(",,"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut header = vec!["model".to_owned(), "scheme".into(), "folds".into(), "runs".into()];
        header.extend(self.metrics.iter().cloned());
        let mut table = vec![header];
        for r in &self.rows {
            let mut line = vec![
                r.model.clone(),
                r.scheme.to_string(),
                format!("{}-fold", r.meta_folds),
                r.runs.to_string(),
            ];
            line.extend(r.cells.iter().map(|c| match c {
                Some(c) => format!("{:.4}±{:.4}", c.mean, c.std),
                None => "-".into(),
            }));
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| table.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for row in &table {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            s.push_str(cells.join("  ").trim_end());
            s.push('\n');
        }
        s
    }
}

pub fn report(dirs: &[PathBuf]) -> Result<ComparisonTable> {
    compare(&collect_runs(dirs)?)
}
