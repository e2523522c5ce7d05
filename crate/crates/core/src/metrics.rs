//! Evaluation metrics and aggregation over runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ROC-AUC by the Mann–Whitney rank statistic; tied scores share the
/// average rank, so each tied positive/negative pair counts 1/2.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score passed to auc".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.iter().filter(|&&l| l == 0).count();
    if pos + neg != labels.len() {
        return Err(Error::invalid("auc labels must be 0 or 1"));
    }
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("auc needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Average {
    /// Mean of per-class F1 over classes present in gold or predictions.
    #[default]
    Macro,
    /// F1 of pooled counts (equals accuracy for single-label data).
    Micro,
}

pub fn f1_score(pred: &[usize], gold: &[usize], num_classes: usize, average: F1Average) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::invalid("pred and gold differ in length"));
    }
    if pred.is_empty() {
        return Err(Error::invalid("f1 of empty input"));
    }
    if pred.iter().chain(gold).any(|&c| c >= num_classes) {
        return Err(Error::invalid("class id out of range"));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let d = 2 * tp + fp + fn_;
        if d == 0 {
            0.0
        } else {
            2.0 * tp as f64 / d as f64
        }
    };
    Ok(match average {
        F1Average::Micro => f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum()),
        F1Average::Macro => {
            let present: Vec<usize> = (0..num_classes).filter(|&c| tp[c] + fp[c] + fn_[c] > 0).collect();
            present.iter().map(|&c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / present.len() as f64
        }
    })
}

pub fn macro_f1(pred: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    f1_score(pred, gold, num_classes, F1Average::Macro)
}

pub fn micro_f1(pred: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    f1_score(pred, gold, num_classes, F1Average::Micro)
}

/// Mean over users with relevant items of `|top-K ∩ relevant| / |relevant|`.
pub fn recall_at_k(ranked: &[Vec<usize>], relevant: &[Vec<usize>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("recall@K needs K >= 1"));
    }
    if ranked.len() != relevant.len() {
        return Err(Error::invalid("ranked and relevant lists differ in length"));
    }
    let mut total = 0.0;
    let mut users = 0;
    for (r, rel) in ranked.iter().zip(relevant) {
        if rel.is_empty() {
            continue;
        }
        let hits = rel.iter().filter(|x| r.iter().take(k).any(|y| y == *x)).count();
        total += hits as f64 / rel.len() as f64;
        users += 1;
    }
    if users == 0 {
        return Err(Error::invalid("no user has relevant items"));
    }
    Ok(total / users as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn single_run(&self) -> bool {
        self.n == 1
    }
}

pub fn aggregate_runs(name: impl Into<String>, values: &[f64]) -> Result<MetricReport> {
    if values.is_empty() {
        return Err(Error::invalid("aggregate of no runs"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(MetricReport {
        name: name.into(),
        values: values.to_vec(),
        mean,
        std: var.sqrt(),
        n: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3).unwrap(), 1.0);
        let m = macro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-15);
        // class 2 absent from both is excluded rather than counted
        assert_eq!(macro_f1(&[0, 1], &[0, 1], 3).unwrap(), 1.0);
        assert_eq!(micro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap(), 0.5);
        assert!(macro_f1(&[], &[], 2).is_err());
    }

    #[test]
    fn recall_examples() {
        let ranked = vec![vec![0, 2, 1, 3]];
        let relevant = vec![vec![0, 1]];
        assert_eq!(recall_at_k(&ranked, &relevant, 2).unwrap(), 0.5);
        assert_eq!(recall_at_k(&ranked, &relevant, 10).unwrap(), 1.0);
        assert!(recall_at_k(&ranked, &[vec![]], 2).is_err());
        assert!(recall_at_k(&ranked, &relevant, 0).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate_runs("auc", &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((r.mean, r.std), (1.0, 0.0));
        let r = aggregate_runs("auc", &[0.0, 1.0]).unwrap();
        assert_eq!((r.mean, r.std), (0.5, 0.5));
        let r = aggregate_runs("auc", &[0.7]).unwrap();
        assert!(r.single_run() && r.std == 0.0);
    }
}
