use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Train / valid / test partition of item ids, with the train pool further
/// divided into meta folds.
///
/// With `k >= 2` folds the folds partition the train pool and rotate as meta
/// data. With a single fold, the fold is a fixed held-out slice (one third)
/// of the train pool and the remainder is always used for training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub meta_folds: Vec<Vec<usize>>,
}

impl SplitAssignment {
    pub fn num_folds(&self) -> usize {
        self.meta_folds.len()
    }

    /// `(train ids, meta ids)` for a rotation index.
    pub fn fold_plan(&self, rotation: usize) -> (Vec<usize>, Vec<usize>) {
        let k = self.meta_folds.len();
        let meta_idx = rotation % k;
        let meta = self.meta_folds[meta_idx].clone();
        let train = if k == 1 {
            let mut held = meta.clone();
            held.sort_unstable();
            self.train.iter().copied().filter(|i| held.binary_search(i).is_err()).collect()
        } else {
            self.meta_folds
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != meta_idx)
                .flat_map(|(_, f)| f.iter().copied())
                .collect()
        };
        (train, meta)
    }
}

/// Shuffles `0..n_items` and cuts it by `ratios = (train, valid, test)`.
pub fn make_splits(n_items: usize, ratios: (f64, f64, f64), meta_folds: usize, seed: u64) -> Result<SplitAssignment> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios {ratios:?} must be positive and sum to 1")));
    }
    if meta_folds == 0 {
        return Err(Error::invalid("meta_folds must be at least 1"));
    }
    let n_train = (a * n_items as f64).round() as usize;
    let n_valid = ((b * n_items as f64).round() as usize).min(n_items - n_train);
    let min_train = if meta_folds == 1 { 2 } else { meta_folds };
    if n_train < min_train {
        return Err(Error::invalid(format!(
            "{n_items} items give a train pool of {n_train}, too small for {meta_folds} meta folds"
        )));
    }
    let mut ids: Vec<usize> = (0..n_items).collect();
    ids.shuffle(&mut rng::stream(seed, rng::streams::SPLITS));
    let train = ids[..n_train].to_vec();
    let valid = ids[n_train..n_train + n_valid].to_vec();
    let test = ids[n_train + n_valid..].to_vec();

    let folds = if meta_folds == 1 {
        let held = (n_train as f64 / 3.0).round().max(1.0) as usize;
        vec![train[n_train - held..].to_vec()]
    } else {
        let base = n_train / meta_folds;
        let extra = n_train % meta_folds;
        let mut out = Vec::with_capacity(meta_folds);
        let mut start = 0;
        for f in 0..meta_folds {
            let len = base + usize::from(f < extra);
            out.push(train[start..start + len].to_vec());
            start += len;
        }
        out
    };
    Ok(SplitAssignment {
        train,
        valid,
        test,
        meta_folds: folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_folds_of_sixty() {
        let s = make_splits(300, (0.6, 0.2, 0.2), 3, 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (180, 60, 60));
        assert_eq!(s.meta_folds.iter().map(Vec::len).collect::<Vec<_>>(), vec![60, 60, 60]);
    }

    #[test]
    fn single_fold_is_held_out_slice() {
        let s = make_splits(300, (0.6, 0.2, 0.2), 1, 1).unwrap();
        assert_eq!(s.meta_folds.len(), 1);
        assert_eq!(s.meta_folds[0].len(), 60);
        let (train, meta) = s.fold_plan(5);
        assert_eq!(train.len(), 120);
        assert!(meta.iter().all(|m| s.train.contains(m) && !train.contains(m)));
    }

    #[test]
    fn too_few_items() {
        assert!(make_splits(2, (0.6, 0.2, 0.2), 3, 1).is_err());
    }

    #[test]
    fn bad_ratios() {
        assert!(make_splits(10, (0.5, 0.5, 0.5), 1, 1).is_err());
        assert!(make_splits(10, (1.0, 0.0, 0.0), 1, 1).is_err());
    }

    proptest! {
        #[test]
        fn partitions_hold(n in 10usize..400, k in 1usize..6, seed in any::<u64>()) {
            let s = make_splits(n, (0.7, 0.1, 0.2), k, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if k >= 2 {
                let mut folds: Vec<usize> = s.meta_folds.concat();
                folds.sort_unstable();
                let mut train = s.train.clone();
                train.sort_unstable();
                prop_assert_eq!(folds, train);
                // rotation covers each fold once per k steps
                let metas: Vec<Vec<usize>> = (0..k).map(|r| s.fold_plan(r).1).collect();
                for f in &s.meta_folds {
                    prop_assert_eq!(metas.iter().filter(|m| *m == f).count(), 1);
                }
            }
            prop_assert_eq!(&s, &make_splits(n, (0.7, 0.1, 0.2), k, seed).unwrap());
        }
    }
}
