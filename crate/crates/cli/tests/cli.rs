use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn selar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selar")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small_run(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(configs().join("movies.json")).unwrap()).unwrap();
    v["epochs"] = json!(2);
    v["steps_per_epoch"] = json!(2);
    v["seeds"] = json!([0]);
    edit(&mut v);
    let path = dir.join("run.json");
    fs::write(&path, v.to_string()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_is_deterministic_and_writes_all_edge_types() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("movies-gen.json");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = selar(&["gen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let files: Vec<Vec<u8>> = ["nodes.tsv", "edges.tsv", "labels.tsv"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);

    let edges = String::from_utf8(outputs[0][1].clone()).unwrap();
    let types: BTreeSet<&str> = edges.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(types, ["ai", "ia", "ua", "ui", "un"].into_iter().collect());

    let labels = String::from_utf8(outputs[0][2].clone()).unwrap();
    let values: BTreeSet<usize> = labels.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values, (0..4).collect());
    assert_eq!(labels.lines().count(), 1 + 300);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_run(dir.path(), |v| v["scheme"] = json!("selarr"));
    let o = selar(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scheme"), "{}", stderr(&o));

    let path = small_run(dir.path(), |v| v["selar"]["gamma"] = json!(0.5));
    let o = selar(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn missing_config_file_exits_with_3() {
    let o = selar(&["run", "--config", "/nonexistent/run.json"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn report_without_runs_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = selar(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_then_report_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_run(dir.path(), |_| {});
    let out = dir.path().join("out");
    let o = selar(&["run", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("seed 0: best epoch"));
    for f in ["metrics.csv", "summary.csv", "task_ranking.csv", "manifest.json", "checkpoint.slrt", "weights_best.csv"] {
        assert!(out.join("seed-0").join(f).is_file(), "{f}");
    }
    assert!(out.join("aggregate.csv").is_file());

    let csv = dir.path().join("table.csv");
    let o = selar(&["report", out.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("selar") && text.contains("3-fold"));
    let table = fs::read_to_string(csv).unwrap();
    assert!(table.starts_with("model,scheme,meta_folds,runs,auc_mean,auc_std\ngcn,selar,3,1,"));
}
