//! First-order gradient boosting for binary logistic loss.
//!
//! Each round fits a squared-error regression tree to the residuals
//! `y - sigmoid(F)` and adds `learning_rate * mean residual` per leaf. Since
//! the logistic loss has curvature at most 1/4, that step never raises the
//! training loss of any leaf when `learning_rate <= 1`.

use crate::matrix::Matrix;
use crate::tree::{fit_regression_tree, normalize, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBoosted {
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    loss_history: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss of margins `f` against labels `y` over `rows`.
pub fn logistic_loss(f: &[f64], y: &[bool], rows: &[usize]) -> f64 {
    let total: f64 = rows
        .iter()
        .map(|&i| softplus(f[i]) - if y[i] { f[i] } else { 0.0 })
        .sum();
    total / rows.len() as f64
}

impl GradientBoosted {
    /// Expects both classes among `rows`; the initial margin is the log-odds
    /// of the training base rate.
    pub fn fit(x: &Matrix, y: &[bool], rows: &[usize], params: &GbtParams) -> GradientBoosted {
        let pos = rows.iter().filter(|&&i| y[i]).count() as f64;
        let rate = (pos / rows.len() as f64).clamp(1e-6, 1.0 - 1e-6);
        let base = (rate / (1.0 - rate)).ln();
        let mut margin = vec![0.0; x.rows()];
        for &i in rows {
            margin[i] = base;
        }
        let mut loss_history = vec![logistic_loss(&margin, y, rows)];
        let mut trees = Vec::with_capacity(params.n_rounds);
        let mut residual = vec![0.0; x.rows()];
        for round in 0..params.n_rounds {
            for &i in rows {
                residual[i] = f64::from(u8::from(y[i])) - sigmoid(margin[i]);
            }
            let seed = params.seed.wrapping_add(round as u64);
            let tree = fit_regression_tree(x, &residual, rows.to_vec(), params.tree, seed);
            for &i in rows {
                margin[i] += params.learning_rate * tree.predict(x.row(i));
            }
            loss_history.push(logistic_loss(&margin, y, rows));
            trees.push(tree);
        }
        GradientBoosted {
            base,
            learning_rate: params.learning_rate,
            trees,
            loss_history,
        }
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Mean training loss before boosting, then after each round.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Squared-error reduction summed over all trees, normalized.
    pub fn importances(&self, n_cols: usize) -> Vec<f64> {
        let mut acc = vec![0.0; n_cols];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.raw_importance()) {
                *a += v;
            }
        }
        normalize(&acc)
    }
}
