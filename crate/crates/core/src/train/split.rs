use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{streams, Rng};

pub const MIN_SPLIT_NODES: usize = 4;

/// Fractions of the nodes assigned to training, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.5,
            val: 0.25,
            test: 0.25,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(*f > 0.0 && f.is_finite())) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be positive and sum to 1, got {}/{}/{}",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fractions: SplitFractions,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            fractions: SplitFractions::default(),
            seed,
        }
    }
}

/// Sorted node indices of each part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random partition of `0..n`. Validation and test sizes are the floors of
/// their fractions; training takes the remainder.
pub fn make_splits(n: usize, spec: &SplitSpec) -> Result<Splits> {
    if n < MIN_SPLIT_NODES {
        return Err(Error::TooFewNodes { n, min: MIN_SPLIT_NODES });
    }
    spec.fractions.validate()?;
    let val = (n as f64 * spec.fractions.val).floor() as usize;
    let test = (n as f64 * spec.fractions.test).floor() as usize;
    let train = n - val - test;
    let perm = Rng::with_stream(spec.seed, streams::SPLIT).permutation(n);
    let part = |r: std::ops::Range<usize>| {
        let mut v = perm[r].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Splits {
        train: part(0..train),
        val: part(train..train + val),
        test: part(train + val..n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(s: &Splits) -> (usize, usize, usize) {
        (s.train.len(), s.val.len(), s.test.len())
    }

    #[test]
    fn sizes_follow_the_fractions() {
        assert_eq!(sizes(&make_splits(100, &SplitSpec::new(0)).unwrap()), (50, 25, 25));
        assert_eq!(sizes(&make_splits(101, &SplitSpec::new(0)).unwrap()), (51, 25, 25));
        assert_eq!(sizes(&make_splits(4, &SplitSpec::new(0)).unwrap()), (2, 1, 1));
        assert_eq!(make_splits(3, &SplitSpec::new(0)).unwrap_err().kind(), "TooFewNodes");
    }

    #[test]
    fn same_seed_same_split() {
        let a = make_splits(57, &SplitSpec::new(11)).unwrap();
        assert_eq!(a, make_splits(57, &SplitSpec::new(11)).unwrap());
        assert_ne!(a, make_splits(57, &SplitSpec::new(12)).unwrap());
    }

    #[test]
    fn parts_cover_every_node_once_for_small_n() {
        for n in 4..40 {
            for seed in 0..8 {
                let s = make_splits(n, &SplitSpec::new(seed)).unwrap();
                let mut seen = vec![0u8; n];
                for &i in s.train.iter().chain(&s.val).chain(&s.test) {
                    seen[i] += 1;
                }
                assert!(seen.iter().all(|&c| c == 1), "n={n} seed={seed}");
                assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
            }
        }
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let mut spec = SplitSpec::new(0);
        spec.fractions.test = 0.3;
        assert_eq!(make_splits(10, &spec).unwrap_err().kind(), "InvalidConfig");
    }
}
