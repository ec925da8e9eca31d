use serde::{Deserialize, Serialize};

use crate::EvalError;

/// Scores at or above this are predicted positive.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `None` when the test labels hold a single class.
    pub auc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No positive predictions; precision reported as 0.
    pub precision_undefined: bool,
    /// No positive labels; recall reported as 0.
    pub recall_undefined: bool,
}

/// Rank-statistic AUC with ties counted as one half.
///
/// Uses midranks over the pooled scores; the numerator is kept in integers
/// (twice the rank sum) so the result equals the pairwise count exactly.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let pos = labels.iter().filter(|&&y| y).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut twice_rank_sum = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the midrank (i + 1 + j) / 2.
        let twice_mid = (i + 1 + j) as u64;
        let group_pos = order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        twice_rank_sum += twice_mid * group_pos;
        i = j;
    }
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Some(twice_u as f64 / (2 * pos * neg) as f64)
}

/// Thresholded metrics plus AUC for one test split.
pub fn compute_metrics(scores: &[f64], labels: &[bool]) -> Result<Metrics, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptySplit("test"));
    }
    if scores.len() != labels.len() {
        return Err(EvalError::Matrix(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= DECISION_THRESHOLD, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fneg += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        accuracy: ratio(tp + tn, scores.len()),
        auc: auc(scores, labels),
        precision,
        recall,
        f1,
        precision_undefined: tp + fp == 0,
        recall_undefined: tp + fneg == 0,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn pairwise(scores: &[f64], labels: &[bool]) -> Option<f64> {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi && !yj {
                    pairs += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        (pairs > 0.0).then(|| num / pairs)
    }

    #[test]
    fn worked_examples() {
        let s = [0.9, 0.8, 0.4, 0.3];
        assert_eq!(auc(&s, &[true, true, false, false]), Some(1.0));
        assert_eq!(auc(&s, &[true, false, true, false]), Some(0.75));
        assert_eq!(auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(auc(&s, &[true; 4]), None);
    }

    #[test]
    fn all_negative_predictions() {
        let m = compute_metrics(&[0.1, 0.2, 0.3], &[true, false, true]).unwrap();
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.precision, 0.0);
        assert!(m.precision_undefined);
        assert!(!m.recall_undefined);
        assert_eq!(m.f1, 0.0);
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let m = compute_metrics(&[0.9, 0.6, 0.7, 0.2, 0.1], &[true, false, true, true, false]).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.6);
        assert!(compute_metrics(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(
            pairs in prop::collection::vec((0u8..12, any::<bool>()), 1..200),
        ) {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| f64::from(*s) / 11.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|(_, y)| *y).collect();
            match (auc(&scores, &labels), pairwise(&scores, &labels)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }

        #[test]
        fn metrics_ignore_row_order(
            pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..100),
            rot in 0usize..100,
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let k = rot % pairs.len();
            let mut s2 = scores.clone();
            let mut l2 = labels.clone();
            s2.rotate_left(k);
            l2.rotate_left(k);
            s2.reverse();
            l2.reverse();
            prop_assert_eq!(compute_metrics(&scores, &labels).unwrap(), compute_metrics(&s2, &l2).unwrap());
        }

        #[test]
        fn metrics_lie_in_unit_interval(pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..100)) {
            let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let m = compute_metrics(&scores, &labels).unwrap();
            for v in [m.accuracy, m.precision, m.recall, m.f1, m.auc.unwrap_or(0.5)] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
