use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::tree::{fit_classification_tree, normalize, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    pub seed: u64,
}

/// Bagged CART; the score is the fraction of trees voting positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<Tree>,
}

impl RandomForest {
    /// Each tree gets its own seed drawn from `params.seed`, used for both the
    /// bootstrap sample and per-split feature draws.
    pub fn fit(x: &Matrix, y: &[bool], rows: &[usize], params: &ForestParams) -> RandomForest {
        let mut master = ChaCha8Rng::seed_from_u64(params.seed);
        let trees = (0..params.n_trees)
            .map(|_| {
                let tree_seed: u64 = master.random();
                let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                let samples = if params.bootstrap {
                    (0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]).collect()
                } else {
                    rows.to_vec()
                };
                fit_classification_tree(x, y, samples, params.tree, rng.random())
            })
            .collect();
        RandomForest { trees }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(row) >= 0.5).count();
        votes as f64 / self.trees.len().max(1) as f64
    }

    /// Mean of the per-tree normalized importances, renormalized.
    pub fn importances(&self, n_cols: usize) -> Vec<f64> {
        let mut acc = vec![0.0; n_cols];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.importances()) {
                *a += v;
            }
        }
        normalize(&acc)
    }
}
