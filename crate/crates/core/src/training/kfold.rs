use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` under `seed` and deals it into `k` disjoint test folds
/// whose sizes differ by at most one (larger folds first).
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("{n} samples cannot fill {k} folds")));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut crate::rng::stream(seed, &[0xF01D]));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        let mut test = ids[start..start + len].to_vec();
        test.sort_unstable();
        let mut train: Vec<usize> = ids[..start].iter().chain(&ids[start + len..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold { train, test });
        start += len;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_into_five() {
        let folds = kfold_split(10, 5, 3).unwrap();
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.test.clone()).collect();
        assert!(folds.iter().all(|f| f.test.len() == 2 && f.train.len() == 8));
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn eleven_into_five() {
        let sizes: Vec<usize> = kfold_split(11, 5, 3).unwrap().iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes, [3, 2, 2, 2, 2]);
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(kfold_split(23, 5, 9).unwrap(), kfold_split(23, 5, 9).unwrap());
        assert!(kfold_split(4, 5, 0).is_err());
        assert!(kfold_split(4, 1, 0).is_err());
    }
}
