//! Inter-rater reliability (Cronbach's alpha), best-subset selection and
//! crowd score aggregation.

use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::HighlightLevel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("annotation matrix needs at least 2 annotators and 2 frames (got {annotators} x {frames})")]
    TooSmall { annotators: usize, frames: usize },
    #[error("annotator `{annotator}` has {got} levels, expected {expected}")]
    RaggedRow {
        annotator: String,
        got: usize,
        expected: usize,
    },
    #[error("annotator `{annotator}` has no label for frame {frame}")]
    MissingCell { annotator: String, frame: usize },
    #[error("duplicate annotator id `{0}`")]
    DuplicateAnnotator(String),
    #[error("total-score variance is zero; alpha undefined")]
    ZeroTotalVariance,
    #[error("need at least {needed} annotators, have {have}")]
    TooFewAnnotators { needed: usize, have: usize },
    #[error("every candidate subset has undefined alpha")]
    AllSubsetsDegenerate,
    #[error("empty annotator subset")]
    EmptySubset,
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
}

/// Annotators × frames grid of highlight levels, dense over the annotated
/// (game-play) frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMatrix {
    annotator_ids: Vec<String>,
    frame_indices: Vec<usize>,
    levels: Vec<Vec<HighlightLevel>>,
}

impl AnnotationMatrix {
    pub fn new(
        annotator_ids: Vec<String>,
        frame_indices: Vec<usize>,
        levels: Vec<Vec<HighlightLevel>>,
    ) -> Result<Self, ReliabilityError> {
        if annotator_ids.len() < 2 || frame_indices.len() < 2 || levels.len() != annotator_ids.len()
        {
            return Err(ReliabilityError::TooSmall {
                annotators: annotator_ids.len().min(levels.len()),
                frames: frame_indices.len(),
            });
        }
        for (id, row) in annotator_ids.iter().zip(&levels) {
            if row.len() != frame_indices.len() {
                return Err(ReliabilityError::RaggedRow {
                    annotator: id.clone(),
                    got: row.len(),
                    expected: frame_indices.len(),
                });
            }
        }
        if let Some(dup) = annotator_ids.iter().duplicates().next() {
            return Err(ReliabilityError::DuplicateAnnotator(dup.clone()));
        }
        Ok(Self {
            annotator_ids,
            frame_indices,
            levels,
        })
    }

    /// Convenience constructor from small integer rows; ids are `A1..Ak`.
    pub fn from_rows(rows: &[&[i64]]) -> Result<Self, ReliabilityError> {
        let n = rows.first().map_or(0, |r| r.len());
        let levels = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&l| HighlightLevel::new(l).expect("level in 0..=3"))
                    .collect()
            })
            .collect();
        Self::new(
            (1..=rows.len()).map(|i| format!("A{i}")).collect(),
            (0..n).collect(),
            levels,
        )
    }

    /// Builds a dense matrix from sparse `(frame, annotator) → level` cells.
    /// Every annotator must cover every frame that appears in `cells`.
    pub fn from_cells(
        cells: &BTreeMap<(String, usize), HighlightLevel>,
    ) -> Result<Self, ReliabilityError> {
        let ids: Vec<String> = cells.keys().map(|(a, _)| a.clone()).dedup().collect();
        let frames: Vec<usize> = cells.keys().map(|&(_, f)| f).sorted().dedup().collect();
        let mut levels = Vec::with_capacity(ids.len());
        for id in &ids {
            let mut row = Vec::with_capacity(frames.len());
            for &f in &frames {
                let l = cells.get(&(id.clone(), f)).ok_or_else(|| {
                    ReliabilityError::MissingCell {
                        annotator: id.clone(),
                        frame: f,
                    }
                })?;
                row.push(*l);
            }
            levels.push(row);
        }
        Self::new(ids, frames, levels)
    }

    pub fn annotator_ids(&self) -> &[String] {
        &self.annotator_ids
    }

    pub fn frame_indices(&self) -> &[usize] {
        &self.frame_indices
    }

    pub fn num_annotators(&self) -> usize {
        self.annotator_ids.len()
    }

    pub fn num_frames(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn row(&self, annotator: usize) -> &[HighlightLevel] {
        &self.levels[annotator]
    }

    fn index_of(&self, id: &str) -> Result<usize, ReliabilityError> {
        self.annotator_ids
            .iter()
            .position(|a| a == id)
            .ok_or_else(|| ReliabilityError::UnknownAnnotator(id.to_string()))
    }
}

fn population_variance<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let mut n = 0usize;
    let mut sum = T::zero();
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / T::from_usize_lossy(n);
    values.map(|v| (v - mean) * (v - mean)).sum::<T>() / T::from_usize_lossy(n)
}

fn alpha_of_rows<T: Scalar>(m: &AnnotationMatrix, rows: &[usize]) -> Result<T, ReliabilityError> {
    let k = rows.len();
    let level = |a: usize, f: usize| T::from_u8(m.levels[a][f].value()).unwrap();
    let item_var: T = rows
        .iter()
        .map(|&a| population_variance((0..m.num_frames()).map(move |f| level(a, f))))
        .sum();
    let total_var =
        population_variance((0..m.num_frames()).map(|f| rows.iter().map(|&a| level(a, f)).sum::<T>()));
    if total_var <= T::zero() {
        return Err(ReliabilityError::ZeroTotalVariance);
    }
    let kf = T::from_usize_lossy(k);
    Ok(kf / (kf - T::one()) * (T::one() - item_var / total_var))
}

/// Cronbach's alpha with population (divide-by-n) variances.
pub fn cronbach_alpha<T: Scalar>(matrix: &AnnotationMatrix) -> Result<T, ReliabilityError> {
    let rows: Vec<usize> = (0..matrix.num_annotators()).collect();
    alpha_of_rows(matrix, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSubset {
    /// Sorted annotator ids.
    pub annotators: Vec<String>,
    pub alpha: f64,
}

/// Exhaustive search for the `k_sel` annotators with maximal mutual alpha.
/// Ties go to the lexicographically smallest sorted id tuple.
pub fn select_best_k(
    matrix: &AnnotationMatrix,
    k_sel: usize,
) -> Result<BestSubset, ReliabilityError> {
    let k = matrix.num_annotators();
    if k < k_sel || k_sel < 2 {
        return Err(ReliabilityError::TooFewAnnotators {
            needed: k_sel.max(2),
            have: k,
        });
    }
    let mut best: Option<BestSubset> = None;
    for rows in (0..k).combinations(k_sel) {
        let Ok(alpha) = alpha_of_rows::<f64>(matrix, &rows) else {
            continue;
        };
        let ids: Vec<String> = rows
            .iter()
            .map(|&r| matrix.annotator_ids[r].clone())
            .sorted()
            .collect();
        let better = match &best {
            None => true,
            Some(b) => alpha > b.alpha || (alpha == b.alpha && ids < b.annotators),
        };
        if better {
            best = Some(BestSubset {
                annotators: ids,
                alpha,
            });
        }
    }
    best.ok_or(ReliabilityError::AllSubsetsDegenerate)
}

/// Per-frame consensus score in `[0, 3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedTrack {
    pub frame_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub annotators: Vec<String>,
}

pub fn aggregate_scores(
    matrix: &AnnotationMatrix,
    subset: &[String],
) -> Result<AggregatedTrack, ReliabilityError> {
    if subset.is_empty() {
        return Err(ReliabilityError::EmptySubset);
    }
    let rows = subset
        .iter()
        .map(|id| matrix.index_of(id))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = (0..matrix.num_frames())
        .map(|f| {
            rows.iter()
                .map(|&a| matrix.levels[a][f].value() as f64)
                .sum::<f64>()
                / rows.len() as f64
        })
        .collect();
    Ok(AggregatedTrack {
        frame_indices: matrix.frame_indices.clone(),
        scores,
        annotators: subset.to_vec(),
    })
}

/// `score >= tau` marks a highlight frame.
pub fn binarize_labels<T: Scalar>(scores: &[T], tau: f64) -> Vec<bool> {
    let tau = T::lit(tau);
    scores.iter().map(|&s| s >= tau).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("tracks differ in length ({0} vs {1})")]
pub struct LengthMismatch(pub usize, pub usize);

/// Fraction of frames where `corrected` differs from `pre`.
pub fn correction_effort<L: PartialEq>(pre: &[L], corrected: &[L]) -> Result<f64, LengthMismatch> {
    if pre.len() != corrected.len() {
        return Err(LengthMismatch(pre.len(), corrected.len()));
    }
    if pre.is_empty() {
        return Ok(0.0);
    }
    let changed = pre.iter().zip(corrected).filter(|(a, b)| a != b).count();
    Ok(changed as f64 / pre.len() as f64)
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// Alpha via sample (n−1) variances with a sum-of-squares formula; the
    /// normalisation cancels in the ratio, so it must agree with the
    /// population-variance implementation.
    pub fn alpha_sample_variance(rows: &[Vec<f64>]) -> Option<f64> {
        let k = rows.len() as f64;
        let n = rows[0].len() as f64;
        let var = |xs: &[f64]| {
            let s: f64 = xs.iter().sum();
            let ss: f64 = xs.iter().map(|x| x * x).sum();
            (ss - s * s / n) / (n - 1.0)
        };
        let items: f64 = rows.iter().map(|r| var(r)).sum();
        let totals: Vec<f64> = (0..rows[0].len())
            .map(|f| rows.iter().map(|r| r[f]).sum())
            .collect();
        let tv = var(&totals);
        if tv <= 1e-12 {
            return None;
        }
        Some(k / (k - 1.0) * (1.0 - items / tv))
    }

    /// Enumerates subsets by bitmask and returns the best alpha.
    pub fn best_alpha_bitmask(m: &AnnotationMatrix, k_sel: usize) -> Option<f64> {
        let k = m.num_annotators();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << k) {
            if mask.count_ones() as usize != k_sel {
                continue;
            }
            let rows: Vec<Vec<f64>> = (0..k)
                .filter(|a| mask & (1 << a) != 0)
                .map(|a| m.row(a).iter().map(|l| l.value() as f64).collect())
                .collect();
            if let Some(a) = alpha_sample_variance(&rows) {
                best = Some(best.map_or(a, |b: f64| b.max(a)));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_identical_annotators() {
        let m = AnnotationMatrix::from_rows(&[&[0, 1, 2, 3], &[0, 1, 2, 3], &[0, 1, 2, 3]]).unwrap();
        assert_eq!(cronbach_alpha::<f64>(&m).unwrap(), 1.0);
    }

    #[test]
    fn alpha_uncorrelated_pair() {
        let m = AnnotationMatrix::from_rows(&[&[0, 0, 1, 1], &[0, 1, 0, 1]]).unwrap();
        assert_eq!(cronbach_alpha::<f64>(&m).unwrap(), 0.0);
    }

    #[test]
    fn alpha_three_sevenths() {
        let m = AnnotationMatrix::from_rows(&[&[0, 1, 2, 3], &[0, 1, 2, 3], &[1, 2, 3, 0]]).unwrap();
        let a: f64 = cronbach_alpha(&m).unwrap();
        assert!((a - 3.0 / 7.0).abs() < 1e-15);
        let a32: f32 = cronbach_alpha(&m).unwrap();
        assert!((a32 - 3.0 / 7.0).abs() < 1e-6);
    }

    #[test]
    fn alpha_zero_total_variance() {
        let m = AnnotationMatrix::from_rows(&[&[2, 2, 2], &[2, 2, 2]]).unwrap();
        assert_eq!(
            cronbach_alpha::<f64>(&m),
            Err(ReliabilityError::ZeroTotalVariance)
        );
    }

    #[test]
    fn alpha_one_under_additive_offsets() {
        let m = AnnotationMatrix::from_rows(&[&[0, 1, 2], &[1, 2, 3], &[0, 1, 2]]).unwrap();
        assert!((cronbach_alpha::<f64>(&m).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(AnnotationMatrix::from_rows(&[&[0, 1]]).is_err());
        assert!(AnnotationMatrix::from_rows(&[&[0], &[1]]).is_err());
        assert!(matches!(
            AnnotationMatrix::from_rows(&[&[0, 1, 2], &[1, 2]]),
            Err(ReliabilityError::RaggedRow { .. })
        ));
    }

    #[test]
    fn best_k_only_candidate() {
        let m = AnnotationMatrix::from_rows(&[&[0, 1, 2], &[0, 2, 2], &[1, 1, 3]]).unwrap();
        let b = select_best_k(&m, 3).unwrap();
        assert_eq!(b.annotators, vec!["A1", "A2", "A3"]);
    }

    #[test]
    fn best_k_drops_contrarian() {
        let m = AnnotationMatrix::from_rows(&[
            &[0, 1, 2, 3],
            &[0, 1, 2, 3],
            &[0, 1, 2, 3],
            &[3, 2, 1, 0],
        ])
        .unwrap();
        let b = select_best_k(&m, 3).unwrap();
        assert_eq!(b.annotators, vec!["A1", "A2", "A3"]);
        assert_eq!(b.alpha, 1.0);
    }

    #[test]
    fn best_k_degenerate_and_too_few() {
        let m = AnnotationMatrix::from_rows(&[&[0, 0, 0], &[0, 0, 0], &[0, 0, 0], &[0, 0, 0]]).unwrap();
        assert_eq!(
            select_best_k(&m, 3),
            Err(ReliabilityError::AllSubsetsDegenerate)
        );
        let m = AnnotationMatrix::from_rows(&[&[0, 1], &[1, 0]]).unwrap();
        assert!(matches!(
            select_best_k(&m, 3),
            Err(ReliabilityError::TooFewAnnotators { .. })
        ));
    }

    #[test]
    fn best_k_ties_pick_smallest_ids() {
        // A1..A4 identical: every triple has alpha 1
        let m = AnnotationMatrix::from_rows(&[&[0, 3], &[0, 3], &[0, 3], &[0, 3]]).unwrap();
        assert_eq!(select_best_k(&m, 3).unwrap().annotators, vec!["A1", "A2", "A3"]);
    }

    #[test]
    fn aggregation() {
        let m = AnnotationMatrix::from_rows(&[&[1, 0, 0], &[2, 0, 1], &[3, 3, 1]]).unwrap();
        let ids: Vec<String> = m.annotator_ids().to_vec();
        let t = aggregate_scores(&m, &ids).unwrap();
        assert_eq!(t.scores[0], 2.0);
        assert_eq!(t.scores[1], 1.0);
        let single = aggregate_scores(&m, &ids[1..2]).unwrap();
        assert_eq!(single.scores, vec![2.0, 0.0, 1.0]);
        assert_eq!(aggregate_scores(&m, &[]), Err(ReliabilityError::EmptySubset));
        assert!(binarize_labels(&t.scores, 1.0)[1]);
        assert!(!binarize_labels(&t.scores, 1.0)[2] || t.scores[2] >= 1.0);
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize_labels(&[1.0], 1.0), vec![true]);
        assert_eq!(binarize_labels(&[2.0 / 3.0], 1.0), vec![false]);
        assert_eq!(binarize_labels(&[0.0, 0.5, 3.0], 0.0), vec![true; 3]);
    }

    #[test]
    fn effort_examples() {
        let a = [1u8; 12];
        assert_eq!(correction_effort(&a, &a).unwrap(), 0.0);
        assert_eq!(correction_effort(&a, &[0u8; 12]).unwrap(), 1.0);
        let mut b = a;
        b[0] = 2;
        b[5] = 2;
        b[11] = 0;
        assert_eq!(correction_effort(&a, &b).unwrap(), 0.25);
        assert_eq!(correction_effort(&a, &b[..3]), Err(LengthMismatch(12, 3)));
    }

    fn matrix_strategy(max_k: usize, max_n: usize) -> impl Strategy<Value = AnnotationMatrix> {
        (3..=max_k, 2..=max_n).prop_flat_map(|(k, n)| {
            prop::collection::vec(prop::collection::vec(0i64..4, n), k).prop_map(|rows| {
                let refs: Vec<&[i64]> = rows.iter().map(|r| r.as_slice()).collect();
                AnnotationMatrix::from_rows(&refs).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn alpha_never_exceeds_one(m in matrix_strategy(7, 30)) {
            if let Ok(a) = cronbach_alpha::<f64>(&m) {
                prop_assert!(a <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn aggregate_within_subset_range(m in matrix_strategy(5, 20)) {
            let ids = m.annotator_ids().to_vec();
            let t = aggregate_scores(&m, &ids).unwrap();
            for f in 0..m.num_frames() {
                let col: Vec<f64> = (0..m.num_annotators()).map(|a| m.row(a)[f].value() as f64).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(t.scores[f] >= lo && t.scores[f] <= hi);
            }
        }

        #[test]
        fn best_k_matches_bitmask_oracle(m in matrix_strategy(7, 50)) {
            let found = select_best_k(&m, 3).ok().map(|b| b.alpha);
            let expected = oracle::best_alpha_bitmask(&m, 3);
            match (found, expected) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9),
                (None, None) => {}
                other => prop_assert!(false, "mismatch {:?}", other),
            }
        }
    }
}
