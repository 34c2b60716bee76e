//! Dense per-frame ground truth from crowd level rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::reliability::{aggregate_scores, binarize_labels, select_best_k, AnnotationMatrix};
use crate::corpus::{LevelRow, GROUND_TRUTH_ID};
use crate::types::{HighlightLevel, SceneType};

pub const BEST_K: usize = 3;
pub const HIGHLIGHT_TAU: f64 = 1.0;

/// Where the consensus scores came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConsensusSource {
    BestSubset { annotators: Vec<String>, alpha: f64 },
    /// Every annotator, used when no subset of `BEST_K` has a defined alpha
    /// or fewer than `BEST_K` annotators exist.
    AllAnnotators { annotators: Vec<String> },
    /// The `gt` rows, used when the crowd cannot form a matrix.
    GroundTruth,
    /// Per-frame mean of whatever rows exist.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consensus {
    /// Per frame, in `[0, 3]`; zero off game play.
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub source: ConsensusSource,
}

impl Consensus {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Best-3 mean of crowd levels over game-play frames, binarized at
/// `HIGHLIGHT_TAU`. Frames of other scene types are negative.
pub fn consensus(scenes: &[SceneType], rows: &[LevelRow]) -> Consensus {
    let n = scenes.len();
    let is_game = |f: usize| f < n && scenes[f] == SceneType::GamePlay;
    let crowd: BTreeMap<(String, usize), HighlightLevel> = rows
        .iter()
        .filter(|r| r.annotator_id != GROUND_TRUTH_ID && is_game(r.frame_index))
        .map(|r| ((r.annotator_id.clone(), r.frame_index), r.level))
        .collect();

    let mut scores = vec![0.0; n];
    let source = match AnnotationMatrix::from_cells(&crowd) {
        Ok(m) => {
            let (subset, source) = match select_best_k(&m, BEST_K) {
                Ok(best) => (
                    best.annotators.clone(),
                    ConsensusSource::BestSubset {
                        annotators: best.annotators,
                        alpha: best.alpha,
                    },
                ),
                Err(_) => {
                    let all = m.annotator_ids().to_vec();
                    (all.clone(), ConsensusSource::AllAnnotators { annotators: all })
                }
            };
            let track = aggregate_scores(&m, &subset).expect("subset drawn from matrix");
            for (&f, &s) in track.frame_indices.iter().zip(&track.scores) {
                scores[f] = s;
            }
            source
        }
        Err(_) => {
            let gt: Vec<&LevelRow> = rows
                .iter()
                .filter(|r| r.annotator_id == GROUND_TRUTH_ID && is_game(r.frame_index))
                .collect();
            if !gt.is_empty() {
                for r in gt {
                    scores[r.frame_index] = r.level.value() as f64;
                }
                ConsensusSource::GroundTruth
            } else {
                let mut sum = vec![(0.0, 0usize); n];
                for ((_, f), l) in &crowd {
                    sum[*f].0 += l.value() as f64;
                    sum[*f].1 += 1;
                }
                for (s, (t, c)) in scores.iter_mut().zip(sum) {
                    if c > 0 {
                        *s = t / c as f64;
                    }
                }
                ConsensusSource::Sparse
            }
        }
    };
    let labels = binarize_labels(&scores, HIGHLIGHT_TAU);
    Consensus {
        scores,
        labels,
        source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(f: usize, a: &str, l: i64) -> LevelRow {
        LevelRow {
            frame_index: f,
            annotator_id: a.into(),
            level: HighlightLevel::new(l).unwrap(),
        }
    }

    #[test]
    fn best_three_mean_over_game_play() {
        use SceneType::*;
        let scenes = [GamePlay, GamePlay, Other, GamePlay, GamePlay];
        let tracks = [
            ("A1", [0, 1, 9, 2, 3]),
            ("A2", [0, 1, 9, 2, 3]),
            ("A3", [0, 1, 9, 3, 3]),
            ("A4", [3, 0, 9, 0, 1]),
        ];
        let mut rows = Vec::new();
        for (a, t) in tracks {
            for (f, &l) in t.iter().enumerate() {
                if f != 2 {
                    rows.push(row(f, a, l));
                }
            }
        }
        // crowd labels on a non-game frame are ignored
        rows.push(row(2, "A1", 3));
        let c = consensus(&scenes, &rows);
        match &c.source {
            ConsensusSource::BestSubset { annotators, .. } => assert_eq!(annotators, &["A1", "A2", "A3"]),
            other => panic!("{other:?}"),
        }
        let want = [0.0, 1.0, 0.0, 7.0 / 3.0, 3.0];
        for (s, w) in c.scores.iter().zip(want) {
            assert!((s - w).abs() < 1e-12);
        }
        assert_eq!(c.labels, vec![false, true, false, true, true]);
    }

    #[test]
    fn fallbacks() {
        use SceneType::*;
        let scenes = [GamePlay, GamePlay, GamePlay];
        // constant annotators: every subset degenerate
        let rows: Vec<LevelRow> = ["A1", "A2", "A3"]
            .iter()
            .flat_map(|a| (0..3).map(move |f| row(f, a, 1)))
            .collect();
        let c = consensus(&scenes, &rows);
        assert!(matches!(c.source, ConsensusSource::AllAnnotators { .. }));
        assert_eq!(c.labels, vec![true; 3]);

        let gt = vec![row(0, "gt", 0), row(1, "gt", 2), row(2, "gt", 0)];
        let c = consensus(&scenes, &gt);
        assert_eq!(c.source, ConsensusSource::GroundTruth);
        assert_eq!(c.labels, vec![false, true, false]);

        let c = consensus(&scenes, &[row(1, "A1", 1)]);
        assert_eq!(c.source, ConsensusSource::Sparse);
        assert_eq!(c.scores, vec![0.0, 1.0, 0.0]);
    }
}
