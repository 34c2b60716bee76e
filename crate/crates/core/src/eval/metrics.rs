//! Frame-level ranking and detection metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("no positive labels; metric undefined")]
    NoPositives,
    #[error("scores ({scores}) and labels ({labels}) differ in length")]
    LengthMismatch { scores: usize, labels: usize },
}

fn check<T>(scores: &[T], labels: &[bool]) -> Result<usize, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetricError::NoPositives);
    }
    Ok(positives)
}

/// Non-interpolated average precision. Items are ranked by descending score,
/// equal scores by ascending index.
pub fn average_precision<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T, MetricError> {
    let positives = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = T::zero();
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += T::from_usize_lossy(hits) / T::from_usize_lossy(rank + 1);
        }
    }
    Ok(sum / T::from_usize_lossy(positives))
}

/// How a score is turned into a binary highlight decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecisionRule {
    /// `score >= threshold`.
    AtLeast(f64),
    /// `score * scale > threshold`; used when the exported score is a
    /// rescaled raw value with a strict decision boundary.
    ScaledAbove { scale: f64, threshold: f64 },
}

impl DecisionRule {
    #[inline]
    pub fn decide<T: Scalar>(&self, score: T) -> bool {
        match *self {
            DecisionRule::AtLeast(t) => score >= T::lit(t),
            DecisionRule::ScaledAbove { scale, threshold } => {
                score * T::lit(scale) > T::lit(threshold)
            }
        }
    }
}

/// TP / (TP + FN) under `rule`.
pub fn recall_with_rule<T: Scalar>(
    scores: &[T],
    labels: &[bool],
    rule: DecisionRule,
) -> Result<T, MetricError> {
    let positives = check(scores, labels)?;
    let tp = scores
        .iter()
        .zip(labels)
        .filter(|&(&s, &l)| l && rule.decide(s))
        .count();
    Ok(T::from_usize_lossy(tp) / T::from_usize_lossy(positives))
}

pub fn recall_at_threshold<T: Scalar>(
    scores: &[T],
    labels: &[bool],
    threshold: f64,
) -> Result<T, MetricError> {
    recall_with_rule(scores, labels, DecisionRule::AtLeast(threshold))
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Reference AP: ranks each item by counting the items that beat it,
    /// then sums precision × recall increment along the full PR curve.
    pub fn brute_force_ap(scores: &[f64], labels: &[bool]) -> f64 {
        let n = scores.len();
        let mut ranked = vec![0usize; n];
        for i in 0..n {
            let rank = (0..n)
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count();
            ranked[rank] = i;
        }
        let p = labels.iter().filter(|&&l| l).count() as f64;
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for k in 1..=n {
            let tp = ranked[..k].iter().filter(|&&i| labels[i]).count() as f64;
            let precision = tp / k as f64;
            let recall = tp / p;
            ap += precision * (recall - prev_recall);
            prev_recall = recall;
        }
        ap
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::brute_force_ap;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ap_hand_example() {
        let ap = average_precision::<f64>(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let oracle = brute_force_ap(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]);
        assert!((ap - oracle).abs() < 1e-15);
    }

    #[test]
    fn ap_perfect_ranking() {
        let ap = average_precision(&[0.9f32, 0.8, 0.3, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn ap_no_positives() {
        assert_eq!(
            average_precision(&[0.1, 0.2], &[false, false]),
            Err(MetricError::NoPositives)
        );
    }

    #[test]
    fn ap_constant_scores_follow_index_order() {
        let labels = [false, true, false, false, true];
        let scores = [0.5; 5];
        let ap: f64 = average_precision(&scores, &labels).unwrap();
        // ranking is plain index order: hits at ranks 2 and 5
        assert!((ap - (0.5 + 0.4) / 2.0).abs() < 1e-15);
        assert!((ap - brute_force_ap(&scores, &labels)).abs() < 1e-15);
    }

    #[test]
    fn recall_examples() {
        let r = recall_at_threshold(&[0.6, 0.4, 0.7], &[true, true, false], 0.5).unwrap();
        assert_eq!(r, 0.5);
        let r = recall_at_threshold(&[0.0, 0.1, 0.7], &[true, true, false], 0.0).unwrap();
        assert_eq!(r, 1.0);
        let r = recall_at_threshold(&[1.0, 0.0, 1.0], &[true, false, true], 0.5).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn scaled_rule_is_strict() {
        let rule = DecisionRule::ScaledAbove {
            scale: 3.0,
            threshold: 1.0,
        };
        assert!(!rule.decide(1.0f64 / 3.0));
        assert!(!rule.decide(0.9f64 / 3.0));
        assert!(rule.decide(1.01f64 / 3.0));
    }

    proptest! {
        #[test]
        fn ap_matches_brute_force(
            (scores, labels) in (1usize..=20).prop_flat_map(|n| (
                prop::collection::vec(prop_oneof![0.0f64..1.0, Just(0.5)], n),
                prop::collection::vec(any::<bool>(), n),
            ))
        ) {
            prop_assume!(labels.iter().any(|&l| l));
            let ap = average_precision(&scores, &labels).unwrap();
            prop_assert!((ap - brute_force_ap(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn ap_invariant_under_monotone_transform(
            (scores, labels) in (1usize..=30).prop_flat_map(|n| (
                prop::collection::vec(0.0f64..1.0, n),
                prop::collection::vec(any::<bool>(), n),
            ))
        ) {
            prop_assume!(labels.iter().any(|&l| l));
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            let a = average_precision(&scores, &labels).unwrap();
            let b = average_precision(&transformed, &labels).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
