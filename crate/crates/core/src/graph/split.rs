use std::hash::{DefaultHasher, Hash, Hasher};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Train/test index sets for one fold. Both lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split over graph `labels`.
///
/// Members of each class are shuffled and dealt round-robin, continuing from
/// where the previous class stopped, so per-class counts and total fold
/// sizes each differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::Config(format!(
                "class {c} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for idx in members {
            tests[next].push(idx);
            next = (next + 1) % k;
        }
    }
    let n = labels.len();
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(fold, mut test)| {
            test.sort_unstable();
            let mut in_test = vec![false; n];
            for &t in &test {
                in_test[t] = true;
            }
            let train = (0..n).filter(|&i| !in_test[i]).collect();
            FoldSplit { fold, train, test }
        })
        .collect())
}

/// Fingerprint of a full set of splits, used to check that paired runs
/// share folds.
pub fn split_hash(splits: &[FoldSplit]) -> u64 {
    let mut h = DefaultHasher::new();
    splits.hash(&mut h);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_two_class() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let folds = stratified_kfold(&labels, 5, 3).unwrap();
        for f in &folds {
            assert_eq!(f.test.len(), 2);
            let ones = f.test.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(ones, 1);
        }
    }

    #[test]
    fn folds_partition_indices() {
        let labels: Vec<usize> = (0..47).map(|i| (i * 7 % 3) as usize).collect();
        let folds = stratified_kfold(&labels, 4, 11).unwrap();
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..47).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.train.len() + f.test.len(), 47);
            assert!(f.test.iter().all(|t| f.train.binary_search(t).is_err()));
        }
    }

    #[test]
    fn fold_sizes_for_188_graphs() {
        let labels: Vec<usize> = (0..188).map(|i| usize::from(i < 125)).collect();
        let folds = stratified_kfold(&labels, 10, 42).unwrap();
        for f in &folds {
            assert!(f.test.len() == 18 || f.test.len() == 19);
        }
    }

    #[test]
    fn rejects_small_classes_and_k1() {
        assert!(stratified_kfold(&[0, 0, 1], 2, 0).is_err());
        assert!(stratified_kfold(&[0, 0, 1, 1], 1, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let a = stratified_kfold(&labels, 3, 5).unwrap();
        let b = stratified_kfold(&labels, 3, 5).unwrap();
        assert_eq!(split_hash(&a), split_hash(&b));
    }
}
