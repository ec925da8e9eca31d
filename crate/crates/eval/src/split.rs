use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            test_fraction: 0.2,
            seed: 42,
        }
    }
}

/// Row indices, each list sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn by_class(labels: &[bool], seed: u64) -> [Vec<usize>; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut classes = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        classes[y as usize].push(i);
    }
    for c in &mut classes {
        c.shuffle(&mut rng);
    }
    classes
}

fn finish(mut train: Vec<usize>, mut test: Vec<usize>) -> Result<Split, EvalError> {
    if train.is_empty() {
        return Err(EvalError::EmptySplit("train"));
    }
    if test.is_empty() {
        return Err(EvalError::EmptySplit("test"));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Holds out `round(n_c * test_fraction)` rows of each class.
pub fn stratified_split(labels: &[bool], config: &SplitConfig) -> Result<Split, EvalError> {
    let f = config.test_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(EvalError::InvalidSplit(format!("test fraction {f} outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in by_class(labels, config.seed) {
        let n_test = (class.len() as f64 * f).round() as usize;
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    finish(train, test)
}

/// `k` folds; within each class the shuffled rows are dealt round-robin.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Split>, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidSplit(format!("need at least 2 folds, got {k}")));
    }
    let mut fold_of = vec![0usize; labels.len()];
    for class in by_class(labels, seed) {
        for (pos, &i) in class.iter().enumerate() {
            fold_of[i] = pos % k;
        }
    }
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
            finish(train, test)
        })
        .collect()
}
