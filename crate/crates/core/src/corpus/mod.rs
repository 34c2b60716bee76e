//! Synthetic esports-like corpus: scripted scenes and highlights, a
//! deterministic renderer, on-disk bundles and video-level splits.

mod bundle;
mod crowd;
mod synth;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bundle::*;
pub use crowd::{ground_truth_rows, simulate_crowd, GROUND_TRUTH_ID};
pub use synth::*;

use crate::types::{FrameImage, TypeError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("synth spec invariant violated: {0}")]
    SpecInvariantViolation(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format version {found} not supported (this build reads {supported})")]
    FormatVersionMismatch { found: u32, supported: u32 },
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("need at least 3 videos to split, got {0}")]
    TooFewVideos(usize),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios((f64, f64, f64)),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

pub const DEFAULT_SPLIT_RATIOS: (f64, f64, f64) = (0.6, 0.2, 0.2);

/// Seeded shuffle, then cuts at `floor(n·r_train)` and
/// `floor(n·(r_train + r_val))`.
pub fn split_dataset(
    video_ids: &[String],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let n = video_ids.len();
    if n < 3 {
        return Err(CorpusError::TooFewVideos(n));
    }
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let mut ids = video_ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // the epsilon keeps exact products like 10·0.6 from landing just below
    let cut1 = ((n as f64 * a) + 1e-9).floor() as usize;
    let cut2 = ((n as f64 * (a + b)) + 1e-9).floor() as usize;
    let test = ids.split_off(cut2);
    let val = ids.split_off(cut1);
    Ok(DatasetSplit { train: ids, val, test })
}

pub const CORPUS_INDEX_FILE: &str = "corpus.json";
pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub num_videos: usize,
    pub seed: u64,
    pub plan: VideoPlan,
    /// Frame counts are drawn uniformly from this inclusive range.
    pub frames_range: (usize, usize),
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_videos: 10,
            seed: 0,
            plan: VideoPlan::default(),
            frames_range: (1800, 3600),
        }
    }
}

/// Contents of `corpus.json` at the corpus root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub format_version: u32,
    pub spec: CorpusSpec,
    pub videos: Vec<String>,
    pub split: DatasetSplit,
}

/// A corpus root on disk.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub index: CorpusIndex,
}

impl Corpus {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(CORPUS_INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(bundle::io_err(&path))?;
        let index: CorpusIndex =
            serde_json::from_str(&text).map_err(|e| CorpusError::Parse(format!("{}: {e}", path.display())))?;
        if index.format_version != CORPUS_FORMAT_VERSION {
            return Err(CorpusError::FormatVersionMismatch {
                found: index.format_version,
                supported: CORPUS_FORMAT_VERSION,
            });
        }
        Ok(Self { root, index })
    }

    pub fn video_dir(&self, video_id: &str) -> PathBuf {
        self.root.join(video_id)
    }
}

/// Reads the frames at `indices` from a bundle, each resized to `size`.
pub fn load_frames(dir: &Path, indices: &[usize], size: usize) -> Result<Vec<FrameImage>, CorpusError> {
    let manifest = read_manifest(dir)?;
    indices
        .iter()
        .map(|&i| Ok(read_frame(dir, &manifest, i)?.resize_nearest(size)))
        .collect()
}

pub fn video_id(i: usize) -> String {
    format!("video_{i:03}")
}

/// Per-video specs for a corpus (no rendering).
pub fn plan_corpus(spec: &CorpusSpec) -> Vec<SynthSpec> {
    (0..spec.num_videos)
        .map(|i| {
            let id = video_id(i);
            let (lo, hi) = spec.frames_range;
            let span = hi.saturating_sub(lo) as u64 + 1;
            let n = lo + (crate::keyed::combine(&[spec.seed, i as u64, 0xf7]) % span) as usize;
            let plan = VideoPlan {
                num_frames: n,
                ..spec.plan.clone()
            };
            plan_video(&id, &plan, spec.seed)
        })
        .collect()
}

/// Renders every video under `root` (one worker thread per video, up to
/// `workers`) and writes `corpus.json`.
pub fn synth_corpus(spec: &CorpusSpec, root: &Path, workers: usize) -> Result<Corpus, CorpusError> {
    fs::create_dir_all(root).map_err(bundle::io_err(root))?;
    let specs = plan_corpus(spec);
    let next = AtomicUsize::new(0);
    let results: Vec<Result<(), CorpusError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers.max(1).min(specs.len().max(1)))
            .map(|_| {
                s.spawn(|| -> Result<(), CorpusError> {
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(v) = specs.get(i) else {
                            return Ok(());
                        };
                        write_synth_video(v, &root.join(&v.video_id), spec.seed)?;
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("synth worker panicked")).collect()
    });
    for r in results {
        r?;
    }
    let videos: Vec<String> = specs.iter().map(|s| s.video_id.clone()).collect();
    let split = split_dataset(&videos, DEFAULT_SPLIT_RATIOS, spec.seed)?;
    let index = CorpusIndex {
        format_version: CORPUS_FORMAT_VERSION,
        spec: spec.clone(),
        videos,
        split,
    };
    let path = root.join(CORPUS_INDEX_FILE);
    fs::write(&path, serde_json::to_string_pretty(&index).expect("index serializes") + "\n")
        .map_err(bundle::io_err(&path))?;
    Ok(Corpus {
        root: root.to_path_buf(),
        index,
    })
}

#[cfg(test)]
mod tests;
