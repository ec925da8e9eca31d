//! CART on a dense [`Matrix`].
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature; rows with `x <= threshold` go left. Among equally good splits
//! the lowest feature index wins, then the lowest threshold. Classification
//! splits are compared exactly on integer class counts, so ties are real ties
//! rather than rounding accidents.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` or `>= p` considers all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 6,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted impurity decrease: `n * parent - n_l * left - n_r * right`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl Tree {
    /// Leaf value for `row`: positive-class fraction for classification
    /// trees, mean target for regression trees.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn split_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    /// Summed impurity decrease per column, unnormalized.
    pub fn raw_importance(&self) -> &[f64] {
        &self.importance
    }

    /// Importances scaled to sum to 1; all zero when the tree never split.
    pub fn importances(&self) -> Vec<f64> {
        normalize(&self.importance)
    }
}

pub(crate) fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

fn sorted_by(x: &Matrix, samples: &[usize], feature: usize) -> Vec<usize> {
    let mut s = samples.to_vec();
    s.sort_by(|&a, &b| x.get(a, feature).total_cmp(&x.get(b, feature)));
    s
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Sum of squared class counts.
fn purity(pos: u128, n: u128) -> u128 {
    pos * pos + (n - pos) * (n - pos)
}

/// Best Gini split of `samples` over `features`.
///
/// Maximizing the Gini decrease is the same as maximizing
/// `(p_l² + q_l²) / n_l + (p_r² + q_r²) / n_r`, which is compared by cross
/// multiplication in integers. Gini is concave, so no split increases
/// impurity; zero-gain splits are accepted, which lets depth-2 trees solve
/// XOR. Returns `None` when no threshold leaves `min_leaf` rows per side.
pub fn best_gini_split(
    x: &Matrix,
    y: &[bool],
    samples: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = samples.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let total_pos = samples.iter().filter(|&&i| y[i]).count() as u128;
    let n128 = n as u128;
    let parent = purity(total_pos, n128);
    // Best (num, den, feature, threshold).
    let mut best: Option<(u128, u128, usize, f64)> = None;
    for &f in features {
        let order = sorted_by(x, samples, f);
        let mut pos_l = 0u128;
        for i in 1..n {
            pos_l += y[order[i - 1]] as u128;
            let (lo, hi) = (x.get(order[i - 1], f), x.get(order[i], f));
            if lo == hi || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let nl = i as u128;
            let nr = n128 - nl;
            let num = purity(pos_l, nl) * nr + purity(total_pos - pos_l, nr) * nl;
            let den = nl * nr;
            let better = match best {
                None => true,
                Some((bn, bd, bf, _)) => {
                    let (a, b) = (num * bd, bn * den);
                    a > b || (a == b && f < bf)
                }
            };
            if better {
                best = Some((num, den, f, midpoint(lo, hi)));
            }
        }
    }
    best.map(|(num, den, feature, threshold)| SplitChoice {
        feature,
        threshold,
        gain: (num as f64 / den as f64 - parent as f64 / n as f64).max(0.0),
    })
}

const MIN_VARIANCE_GAIN: f64 = 1e-12;

/// Best squared-error split of `samples` for a real-valued target.
///
/// Gain is `S_l²/n_l + S_r²/n_r - S²/n`; a candidate must beat the current
/// best by more than `1e-12` to replace it.
pub fn best_variance_split(
    x: &Matrix,
    target: &[f64],
    samples: &[usize],
    features: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = samples.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = samples.iter().map(|&i| target[i]).sum();
    let base = total * total / n as f64;
    let mut best: Option<SplitChoice> = None;
    for &f in features {
        let order = sorted_by(x, samples, f);
        let mut sum_l = 0.0;
        for i in 1..n {
            sum_l += target[order[i - 1]];
            let (lo, hi) = (x.get(order[i - 1], f), x.get(order[i], f));
            if lo == hi || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let sum_r = total - sum_l;
            let gain = sum_l * sum_l / i as f64 + sum_r * sum_r / (n - i) as f64 - base;
            let floor = best.as_ref().map_or(MIN_VARIANCE_GAIN, |b| b.gain + MIN_VARIANCE_GAIN);
            if gain > floor {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    gain,
                });
            }
        }
    }
    best
}

struct Grower<'a, S, L> {
    x: &'a Matrix,
    params: TreeParams,
    rng: ChaCha8Rng,
    find: S,
    leaf: L,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl<S, L> Grower<'_, S, L>
where
    S: Fn(&[usize], &[usize]) -> Option<SplitChoice>,
    L: Fn(&[usize]) -> f64,
{
    fn features(&mut self) -> Vec<usize> {
        let p = self.x.cols();
        match self.params.max_features {
            Some(m) if m < p => {
                let mut f = sample(&mut self.rng, p, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let n = samples.len();
        self.nodes.push(Node::Leaf {
            value: (self.leaf)(&samples),
            samples: n,
        });
        if depth >= self.params.max_depth {
            return id;
        }
        let features = self.features();
        let Some(choice) = (self.find)(&samples, &features) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.x.get(i, choice.feature) <= choice.threshold);
        self.importance[choice.feature] += choice.gain;
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
            samples: n,
        };
        id
    }
}

fn build<S, L>(x: &Matrix, samples: Vec<usize>, params: TreeParams, seed: u64, find: S, leaf: L) -> Tree
where
    S: Fn(&[usize], &[usize]) -> Option<SplitChoice>,
    L: Fn(&[usize]) -> f64,
{
    let mut g = Grower {
        x,
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        find,
        leaf,
        nodes: Vec::new(),
        importance: vec![0.0; x.cols()],
    };
    g.grow(samples, 0);
    Tree {
        nodes: g.nodes,
        importance: g.importance,
    }
}

/// Gini classification tree over `samples` (row indices, repeats allowed).
/// Leaves hold the positive-class fraction. `seed` only matters when
/// `max_features` subsamples.
pub fn fit_classification_tree(x: &Matrix, y: &[bool], samples: Vec<usize>, params: TreeParams, seed: u64) -> Tree {
    let min_leaf = params.min_samples_leaf;
    build(
        x,
        samples,
        params,
        seed,
        |s, f| {
            let pos = s.iter().filter(|&&i| y[i]).count();
            if pos == 0 || pos == s.len() {
                return None;
            }
            best_gini_split(x, y, s, f, min_leaf)
        },
        |s| s.iter().filter(|&&i| y[i]).count() as f64 / s.len().max(1) as f64,
    )
}

/// Squared-error regression tree; leaves hold the mean target.
pub fn fit_regression_tree(x: &Matrix, target: &[f64], samples: Vec<usize>, params: TreeParams, seed: u64) -> Tree {
    let min_leaf = params.min_samples_leaf;
    build(
        x,
        samples,
        params,
        seed,
        |s, f| best_variance_split(x, target, s, f, min_leaf),
        |s| s.iter().map(|&i| target[i]).sum::<f64>() / s.len().max(1) as f64,
    )
}
