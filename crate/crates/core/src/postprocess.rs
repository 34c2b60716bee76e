//! Dense score reconstruction from stride-sampled predictions, and
//! threshold-based highlight segment extraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::types::{SceneType, Timeline};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PostprocessError {
    #[error("sample indices must be strictly increasing (index {0} out of order)")]
    UnsortedSamples(usize),
    #[error("samples must cover frame 0 and frame {last}; got first {first:?}, last {found_last:?}")]
    CoverageGap {
        last: usize,
        first: Option<usize>,
        found_last: Option<usize>,
    },
}

fn check_samples<V>(samples: &[(usize, V)], num_frames: usize) -> Result<(), PostprocessError> {
    let gap = || PostprocessError::CoverageGap {
        last: num_frames.saturating_sub(1),
        first: samples.first().map(|s| s.0),
        found_last: samples.last().map(|s| s.0),
    };
    if num_frames == 0 || samples.is_empty() {
        return Err(gap());
    }
    for w in samples.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(PostprocessError::UnsortedSamples(w[1].0));
        }
    }
    if samples[0].0 != 0 || samples[samples.len() - 1].0 != num_frames - 1 {
        return Err(gap());
    }
    Ok(())
}

/// Piecewise-linear reconstruction of a per-frame score array from
/// ordered `(frame_index, score)` samples covering `0` and `num_frames - 1`.
pub fn interpolate<T: Scalar>(
    samples: &[(usize, T)],
    num_frames: usize,
) -> Result<Vec<T>, PostprocessError> {
    check_samples(samples, num_frames)?;
    let mut out = Vec::with_capacity(num_frames);
    out.push(samples[0].1);
    for w in samples.windows(2) {
        let (i, si) = w[0];
        let (j, sj) = w[1];
        let span = T::from_usize_lossy(j - i);
        for t in i + 1..j {
            let frac = T::from_usize_lossy(t - i) / span;
            out.push(si + (sj - si) * frac);
        }
        out.push(sj);
    }
    debug_assert_eq!(out.len(), num_frames);
    Ok(out)
}

/// Per-frame scene labels from sampled ones: each frame takes the label of
/// its nearest sample, ties going to the earlier sample.
pub fn fill_scene_nearest(
    samples: &[(usize, SceneType)],
    num_frames: usize,
) -> Result<Vec<SceneType>, PostprocessError> {
    check_samples(samples, num_frames)?;
    let mut out = Vec::with_capacity(num_frames);
    out.push(samples[0].1);
    for w in samples.windows(2) {
        let (i, a) = w[0];
        let (j, b) = w[1];
        for t in i + 1..j {
            out.push(if t - i <= j - t { a } else { b });
        }
        out.push(b);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    pub peak_score: f64,
    pub mean_score: f64,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentPolicy {
    pub threshold: f64,
    pub min_len_frames: usize,
    pub merge_gap_frames: usize,
}

impl Default for SegmentPolicy {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            min_len_frames: 15,
            merge_gap_frames: 10,
        }
    }
}

pub fn extract_segments<T: Scalar>(scores: &[T], policy: &SegmentPolicy) -> Vec<Segment> {
    let theta = T::lit(policy.threshold);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (t, &s) in scores.iter().enumerate() {
        match (s >= theta, start) {
            (true, None) => start = Some(t),
            (false, Some(b)) => {
                runs.push((b, t - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(b) = start {
        runs.push((b, scores.len() - 1));
    }

    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            // gap = frames strictly between the two runs
            Some(last) if run.0 - last.1 - 1 <= policy.merge_gap_frames => last.1 = run.1,
            _ => merged.push(run),
        }
    }

    merged
        .into_iter()
        .filter(|&(b, e)| e - b + 1 >= policy.min_len_frames)
        .map(|(b, e)| {
            let slice = &scores[b..=e];
            let peak = slice.iter().fold(T::neg_infinity(), |m, &s| m.max(s));
            let mean = slice.iter().copied().sum::<T>() / T::from_usize_lossy(slice.len());
            Segment {
                start_frame: b,
                end_frame: e,
                peak_score: peak.as_f64(),
                mean_score: mean.as_f64(),
            }
        })
        .collect()
}

/// Fixed-precision score text used in every serialized timeline.
pub fn format_score(score: f64) -> String {
    format!("{score:.6}")
}

pub const TIMELINE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub start_frame: usize,
    pub end_frame: usize,
    pub peak_score: String,
    pub mean_score: String,
}

/// Serialized timeline: header, per-frame scene codes and scores, sampled
/// indices and segments. Scores are six-decimal strings so the text is
/// byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineDocument {
    pub format_version: u32,
    pub video_id: String,
    pub fps: f64,
    pub num_frames: usize,
    pub stride: usize,
    pub threshold: f64,
    pub scene: Vec<u8>,
    pub score: Vec<String>,
    pub sampled_indices: Vec<usize>,
    pub segments: Vec<SegmentEntry>,
}

impl TimelineDocument {
    pub fn new(timeline: &Timeline, stride: usize, policy: &SegmentPolicy) -> Self {
        let segments = extract_segments(&timeline.score, policy)
            .iter()
            .map(|s| SegmentEntry {
                start_frame: s.start_frame,
                end_frame: s.end_frame,
                peak_score: format_score(s.peak_score),
                mean_score: format_score(s.mean_score),
            })
            .collect();
        Self {
            format_version: TIMELINE_FORMAT_VERSION,
            video_id: timeline.video_id.clone(),
            fps: timeline.fps,
            num_frames: timeline.num_frames(),
            stride,
            threshold: policy.threshold,
            scene: timeline.scene.iter().map(|s| s.code()).collect(),
            score: timeline.score.iter().map(|&s| format_score(s)).collect(),
            sampled_indices: timeline.sampled_indices.clone(),
            segments,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("timeline serializes") + "\n"
    }
}

pub const SEGMENTS_HEADER: &str = "start_frame,end_frame,peak_score,mean_score";

pub fn segments_csv(segments: &[SegmentEntry]) -> String {
    let mut out = String::from(SEGMENTS_HEADER);
    out.push('\n');
    for s in segments {
        out.push_str(&format!("{},{},{},{}\n", s.start_frame, s.end_frame, s.peak_score, s.mean_score));
    }
    out
}
