use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split. Each class is shuffled by `seed` and dealt
/// round-robin over the folds, continuing where the previous class stopped
/// so fold sizes stay within one of each other.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid("stratified_kfold", format!("k = {k}, need at least 2 folds")));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    if let Some((c, m)) = members.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < k) {
        return Err(Error::invalid(
            "stratified_kfold",
            format!("class {c} has {} members, fewer than k = {k}", m.len()),
        ));
    }

    let mut rng = rng::pcg(seed, Stream::Folds);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut next = 0;
    for mut class in members {
        class.shuffle(&mut rng);
        for i in class {
            tests[next].push(i);
            next = (next + 1) % k;
        }
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            test.iter().for_each(|&i| in_test[i] = true);
            let train = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            Fold { train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_five_fold() {
        let labels: Vec<usize> = (0..125).map(|i| i % 5).collect();
        let folds = stratified_kfold(&labels, 5, 3).unwrap();
        let mut seen = vec![0; 125];
        for f in &folds {
            assert_eq!(f.test.len(), 25);
            assert_eq!(f.train.len(), 100);
            for c in 0..5 {
                assert_eq!(f.test.iter().filter(|&&i| labels[i] == c).count(), 5);
            }
            f.test.iter().for_each(|&i| seen[i] += 1);
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn uneven_classes_stay_within_one() {
        let labels: Vec<usize> = (0..23).map(|i| usize::from(i >= 12)).collect();
        let folds = stratified_kfold(&labels, 5, 0).unwrap();
        for f in &folds {
            for (c, n) in [(0, 12), (1, 11)] {
                let got = f.test.iter().filter(|&&i| labels[i] == c).count();
                assert!(got == n / 5 || got == n.div_ceil(5));
            }
        }
    }

    #[test]
    fn rejects_degenerate_requests() {
        let labels = [0, 0, 1, 1];
        assert!(stratified_kfold(&labels, 1, 0).is_err());
        assert!(stratified_kfold(&labels, 3, 0).is_err());
    }
}
