use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{HeadKind, TaskSpec};
use crate::tensor::ParamSet;

use super::step::StepLog;
use super::weighting::{WeightingNet, Xi};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRank {
    pub task_id: usize,
    pub name: String,
    pub primary: bool,
    pub mean_weighted_loss: f64,
    pub mean_weight: f64,
    pub mean_loss: f64,
}

/// Tasks by descending average weighted loss `V·ℓ` over all logged steps;
/// ties go to the lower task id.
pub fn task_weight_report(logs: &[StepLog], specs: &[TaskSpec]) -> Result<Vec<TaskRank>> {
    if logs.is_empty() {
        return Err(Error::invalid("task ranking needs at least one logged step"));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let entries: Vec<_> = logs
            .iter()
            .flat_map(|l| l.tasks.iter().filter(|t| t.task_id == spec.id))
            .collect();
        if entries.is_empty() {
            continue;
        }
        let n = entries.len() as f64;
        rows.push(TaskRank {
            task_id: spec.id,
            name: spec.name.clone(),
            primary: spec.is_primary(),
            mean_weighted_loss: entries.iter().map(|t| t.mean_weighted_loss).sum::<f64>() / n,
            mean_weight: entries.iter().map(|t| t.mean_weight).sum::<f64>() / n,
            mean_loss: entries.iter().map(|t| t.mean_loss).sum::<f64>() / n,
        });
    }
    rows.sort_by(|a, b| {
        b.mean_weighted_loss
            .total_cmp(&a.mean_weighted_loss)
            .then(a.task_id.cmp(&b.task_id))
    });
    Ok(rows)
}

pub fn ranking_csv(rows: &[TaskRank]) -> String {
    let mut s = String::from("rank,task_id,task,primary,mean_weighted_loss,mean_weight,mean_loss\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            i + 1,
            r.task_id,
            r.name,
            r.primary,
            r.mean_weighted_loss,
            r.mean_weight,
            r.mean_loss
        );
    }
    s
}

/// `-(1 - p)^γ ln p` with `p = exp(-loss)`.
pub fn focal_reference(loss: f64, gamma: f64) -> f64 {
    let p = (-loss).exp();
    (1.0 - p).powf(gamma) * loss
}

/// Weight curves `V(loss, task, sign)` over a loss grid, with the weighted
/// loss and a focal-loss reference column.
///
/// Binary tasks get a curve per sign (1 positive, 0 negative); multiclass
/// tasks only sign 1.
pub fn weight_curve_dump(
    vnet: &WeightingNet,
    theta: &ParamSet,
    grid: &[f64],
    tasks: &[TaskSpec],
    focal_gamma: f64,
) -> Result<String> {
    if grid.is_empty() {
        return Err(Error::invalid("empty loss grid"));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("loss grid must be finite and ascending"));
    }
    let mut s = String::from("task,sign,loss,weight,weighted_loss,focal_reference\n");
    for (pos, spec) in tasks.iter().enumerate() {
        let signs: &[f64] = if spec.head == HeadKind::PairBinary { &[1.0, 0.0] } else { &[1.0] };
        for &sign in signs {
            let xi: Vec<Xi> = grid.iter().map(|&loss| Xi { loss, task: pos, sign }).collect();
            let v = vnet.weights(theta, &xi)?;
            for (&loss, &w) in grid.iter().zip(&v) {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    spec.name,
                    sign,
                    loss,
                    w,
                    w * loss,
                    focal_reference(loss, focal_gamma)
                );
            }
        }
    }
    Ok(s)
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn loss_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::selar::step::TaskStepLog;
    use crate::tasks::TaskKind;

    fn specs() -> Vec<TaskSpec> {
        vec![
            TaskSpec::new(0, "primary", TaskKind::Primary, HeadKind::PairBinary, 2).unwrap(),
            TaskSpec::new(1, "a", TaskKind::Metapath, HeadKind::PairBinary, 2).unwrap(),
            TaskSpec::new(2, "b", TaskKind::Degree, HeadKind::NodeMulticlass, 3).unwrap(),
        ]
    }

    fn log(values: &[(usize, f64, f64)]) -> StepLog {
        StepLog {
            step: 0,
            train_loss: 0.0,
            meta_loss: None,
            tasks: values
                .iter()
                .map(|&(id, w, l)| TaskStepLog {
                    task_id: id,
                    mean_weighted_loss: w * l,
                    mean_weight: w,
                    mean_loss: l,
                    count: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn ties_break_by_task_id() {
        let r = task_weight_report(&[log(&[(2, 0.5, 1.0), (0, 0.5, 1.0), (1, 0.5, 1.0)])], &specs()).unwrap();
        assert_eq!(r.iter().map(|x| x.task_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(r[0].primary);
    }

    #[test]
    fn zero_weight_ranks_last() {
        let r = task_weight_report(&[log(&[(0, 0.5, 0.2), (1, 0.0, 3.0), (2, 0.5, 0.9)])], &specs()).unwrap();
        assert_eq!(r.last().unwrap().task_id, 1);
    }

    #[test]
    fn no_logs_is_an_error() {
        assert!(task_weight_report(&[], &specs()).is_err());
    }

    #[test]
    fn curve_dump_is_deterministic_and_in_range() {
        let v = WeightingNet::learned(3, 4, 8);
        let mut p = v.init_params("v", &mut rng::stream(3, 0));
        *p.get_mut(3) = crate::tensor::Tensor::full(8, 1, 0.7);
        let grid = loss_grid(0.0, 10.0, 11);
        let a = weight_curve_dump(&v, &p, &grid, &specs(), 2.0).unwrap();
        let b = weight_curve_dump(&v, &p, &grid, &specs(), 2.0).unwrap();
        assert_eq!(a, b);
        // two signs for the binary tasks, one for the multiclass task
        assert_eq!(a.lines().count(), 1 + 11 * 5);
        for line in a.lines().skip(1) {
            let w: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
            assert!(w > 0.0 && w < 1.0);
        }
    }

    #[test]
    fn focal_column() {
        assert_eq!(focal_reference(0.0, 2.0), 0.0);
        let l: f64 = 2.0;
        let p = (-l).exp();
        assert!((focal_reference(l, 2.0) - (-(1.0 - p).powi(2) * p.ln())).abs() < 1e-15);
    }

    #[test]
    fn bad_grid() {
        let v = WeightingNet::fixed(3, 1.0);
        assert!(weight_curve_dump(&v, &ParamSet::new(), &[1.0, 0.0], &specs(), 2.0).is_err());
        assert!(weight_curve_dump(&v, &ParamSet::new(), &[f64::NAN], &specs(), 2.0).is_err());
    }
}
