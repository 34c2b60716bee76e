//! Machine-in-the-loop scene labeling rounds.
//!
//! Each round takes human-corrected scene labels for the pending batch,
//! retrains the scene model on every labeled video, and pre-annotates the
//! next batch with it. The very first batch is pre-annotated by an empty
//! model that marks every frame as game play.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::reliability::correction_effort;
use crate::cascade::{CascadeError, SceneClassifier};
use crate::corpus::{
    load_frames, read_manifest, read_scene_labels, write_scene_labels, Corpus, CorpusError, SCENE_LABELS_FILE,
};
use crate::eval::metrics::average_precision;
use crate::keyed::combine;
use crate::nnet::{
    inverse_frequency_weights, load_model, save_model, train, Dataset, Head, NetworkSpec, NnetError, Targets,
    TrainConfig,
};
use crate::pipeline::{run_pipeline, sample_indices, FrameSource, PipelineError, SourceMode};
use crate::types::{PipelineConfig, SceneType};

pub const MITL_STATE_FILE: &str = "mitl_state.json";
pub const MITL_FORMAT_VERSION: u32 = 1;
/// Videos per batch for the first rounds; the last batch takes the rest.
pub const BATCH_SCHEDULE: [usize; 3] = [2, 4, 6];
const LABELS_DIR: &str = "labels";
const MODELS_DIR: &str = "models";

#[derive(Debug, Error)]
pub enum MitlError {
    #[error("corrections missing for pending videos: {}", .0.join(", "))]
    IncompleteCorrections(Vec<String>),
    #[error("corrections given for videos outside the pending batch: {}", .0.join(", "))]
    UnexpectedVideos(Vec<String>),
    #[error("video {video}: corrected track has {found} frames, expected {expected}")]
    LengthMismatch {
        video: String,
        expected: usize,
        found: usize,
    },
    #[error("every video is already labeled")]
    Finished,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("round state format version {found} not supported (expected {supported})")]
    FormatVersionMismatch { found: u32, supported: u32 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Training(#[from] NnetError),
    #[error(transparent)]
    Model(#[from] CascadeError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MitlError + '_ {
    move |source| MitlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Batch sizes for `total` videos under the 2, 4, 6, remainder schedule.
pub fn batch_sizes(total: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut left = total;
    for &b in &BATCH_SCHEDULE {
        if left == 0 {
            return out;
        }
        out.push(b.min(left));
        left -= b.min(left);
    }
    if left > 0 {
        out.push(left);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub videos: Vec<String>,
    /// Round whose model pre-annotated this batch; `None` for the empty model.
    pub pre_annotated_by: Option<usize>,
    /// Changed frames over all frames of the batch.
    pub correction_effort: f64,
    pub per_video_effort: BTreeMap<String, f64>,
    pub trained_on_videos: usize,
    pub scene_model: String,
    /// Mean per-class AP of the new scene model on labeled frames held out
    /// from training (offset by half a stride).
    pub scene_val_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub format_version: u32,
    /// Number of the next round to run, from 1.
    pub round: usize,
    pub video_order: Vec<String>,
    pub labeled: Vec<String>,
    pub pending_batch: Vec<String>,
    /// Scene pre-annotations for each pending video.
    pub pre_annotations: BTreeMap<String, Vec<SceneType>>,
    /// File name of the current scene model under `models/`.
    pub scene_model: Option<String>,
    pub history: Vec<RoundRecord>,
}

impl RoundState {
    /// Round 1 over `videos` in order; `num_frames` gives each video's length.
    pub fn new(videos: Vec<String>, num_frames: impl Fn(&str) -> usize) -> Self {
        let first = batch_sizes(videos.len()).first().copied().unwrap_or(0);
        let pending: Vec<String> = videos[..first].to_vec();
        let pre_annotations = pending
            .iter()
            .map(|v| (v.clone(), vec![SceneType::GamePlay; num_frames(v)]))
            .collect();
        Self {
            format_version: MITL_FORMAT_VERSION,
            round: 1,
            video_order: videos,
            labeled: Vec::new(),
            pending_batch: pending,
            pre_annotations,
            scene_model: None,
            history: Vec::new(),
        }
    }

    pub fn for_corpus(corpus: &Corpus) -> Result<Self, MitlError> {
        let mut lengths = BTreeMap::new();
        for v in &corpus.index.videos {
            lengths.insert(v.clone(), read_manifest(&corpus.video_dir(v))?.num_frames);
        }
        Ok(Self::new(corpus.index.videos.clone(), |v| lengths[v]))
    }

    pub fn is_finished(&self) -> bool {
        self.pending_batch.is_empty()
    }

    pub fn effort_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.correction_effort).collect()
    }

    pub fn load(dir: &Path) -> Result<Self, MitlError> {
        let path = dir.join(MITL_STATE_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let state: RoundState = serde_json::from_str(&text).map_err(|e| MitlError::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        if state.format_version != MITL_FORMAT_VERSION {
            return Err(MitlError::FormatVersionMismatch {
                found: state.format_version,
                supported: MITL_FORMAT_VERSION,
            });
        }
        Ok(state)
    }

    /// Writes to a temporary file and renames it over `mitl_state.json`.
    pub fn save(&self, dir: &Path) -> Result<(), MitlError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(MITL_STATE_FILE);
        let tmp = dir.join(format!("{MITL_STATE_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self).expect("state serializes") + "\n";
        fs::write(&tmp, text).map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitlConfig {
    /// Training frames are taken every `stride` frames; pre-annotation uses
    /// the same stride with nearest-sample fill.
    pub stride: usize,
    pub input_size: usize,
    pub train: TrainConfig,
    pub workers: usize,
}

impl Default for MitlConfig {
    fn default() -> Self {
        Self {
            stride: 10,
            input_size: 32,
            train: TrainConfig {
                epochs: 6,
                ..TrainConfig::default()
            },
            workers: 1,
        }
    }
}

pub fn corrected_labels_path(state_dir: &Path, video: &str) -> PathBuf {
    state_dir.join(LABELS_DIR).join(format!("{video}.csv"))
}

pub fn scene_model_path(state_dir: &Path, name: &str) -> PathBuf {
    state_dir.join(MODELS_DIR).join(name)
}

/// Checks that `corrections` cover exactly the pending batch with tracks of
/// the pre-annotated length.
pub fn check_corrections(
    state: &RoundState,
    corrections: &BTreeMap<String, Vec<SceneType>>,
) -> Result<(), MitlError> {
    if state.is_finished() {
        return Err(MitlError::Finished);
    }
    let missing: Vec<String> = state
        .pending_batch
        .iter()
        .filter(|v| !corrections.contains_key(*v))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(MitlError::IncompleteCorrections(missing));
    }
    let extra: Vec<String> = corrections
        .keys()
        .filter(|v| !state.pending_batch.contains(v))
        .cloned()
        .collect();
    if !extra.is_empty() {
        return Err(MitlError::UnexpectedVideos(extra));
    }
    for v in &state.pending_batch {
        let expected = state.pre_annotations.get(v).map_or(0, Vec::len);
        let found = corrections[v].len();
        if expected != found {
            return Err(MitlError::LengthMismatch {
                video: v.clone(),
                expected,
                found,
            });
        }
    }
    Ok(())
}

fn scene_dataset(
    corpus: &Corpus,
    state_dir: &Path,
    videos: &[String],
    cfg: &MitlConfig,
    offset: usize,
) -> Result<Dataset, MitlError> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for v in videos {
        let track = read_scene_labels(&corrected_labels_path(state_dir, v))?;
        let idx: Vec<usize> = sample_indices(track.len(), cfg.stride)
            .into_iter()
            .map(|i| i + offset)
            .filter(|&i| i < track.len())
            .collect();
        images.extend(load_frames(&corpus.video_dir(v), &idx, cfg.input_size)?);
        labels.extend(idx.iter().map(|&i| track[i].code() as usize));
    }
    Ok(Dataset {
        images,
        targets: Targets::Classes(labels),
        class_names: crate::cascade::scene_labels(),
    })
}

/// Mean over scene classes present in `data` of the one-vs-rest AP.
pub fn scene_mean_ap(model: &SceneClassifier, data: &Dataset) -> Result<Option<f64>, MitlError> {
    let Targets::Classes(labels) = &data.targets else {
        return Ok(None);
    };
    let probs = data
        .images
        .iter()
        .map(|img| model.classify(img).map(|p| p.probs))
        .collect::<Result<Vec<_>, _>>()?;
    let mut aps = Vec::new();
    for c in 0..4 {
        let truth: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        if let Ok(ap) = average_precision(&scores, &truth) {
            aps.push(ap);
        }
    }
    Ok((!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64))
}

/// Scene labels for every frame of `video` from the given model.
pub fn pre_annotate(
    corpus: &Corpus,
    video: &str,
    model: &SceneClassifier,
    cfg: &MitlConfig,
) -> Result<Vec<SceneType>, MitlError> {
    let source = FrameSource::open(corpus.video_dir(video), SourceMode::ImageSequence)?;
    let pc = PipelineConfig {
        stride: cfg.stride,
        input_size: cfg.input_size,
        workers: cfg.workers.max(1),
        ..PipelineConfig::default()
    };
    Ok(run_pipeline(source, model, &pc)?.timeline.scene)
}

/// Merges corrections for the pending batch, retrains the scene model on all
/// labeled videos and pre-annotates the next batch. Writes corrected labels
/// and the model under `state_dir` but leaves saving the state to the caller.
pub fn run_mitl_round(
    state: &RoundState,
    corrections: &BTreeMap<String, Vec<SceneType>>,
    corpus: &Corpus,
    state_dir: &Path,
    cfg: &MitlConfig,
) -> Result<RoundState, MitlError> {
    check_corrections(state, corrections)?;
    let round = state.round;

    let mut per_video_effort = BTreeMap::new();
    let (mut changed, mut total) = (0.0, 0usize);
    for v in &state.pending_batch {
        let pre = &state.pre_annotations[v];
        let fixed = &corrections[v];
        let e = correction_effort(pre, fixed).expect("lengths checked");
        changed += e * pre.len() as f64;
        total += pre.len();
        per_video_effort.insert(v.clone(), e);
        let path = corrected_labels_path(state_dir, v);
        fs::create_dir_all(path.parent().expect("labels dir")).map_err(io_err(&path))?;
        write_scene_labels(&path, fixed)?;
    }
    let correction_effort = if total == 0 { 0.0 } else { changed / total as f64 };

    let mut labeled = state.labeled.clone();
    labeled.extend(state.pending_batch.iter().cloned());

    let data = scene_dataset(corpus, state_dir, &labeled, cfg, 0)?;
    let Targets::Classes(classes) = &data.targets else {
        unreachable!("scene targets are classes")
    };
    let train_cfg = TrainConfig {
        seed: combine(&[cfg.train.seed, round as u64]),
        class_weights: Some(inverse_frequency_weights(classes, 4)),
        ..cfg.train.clone()
    };
    let spec = NetworkSpec::tinynet(4, cfg.input_size, Head::SoftmaxClassifier);
    let artifact = train(&spec, &data, &train_cfg)?;
    let model_name = format!("scene_round_{round}.nnm");
    let model_path = scene_model_path(state_dir, &model_name);
    fs::create_dir_all(model_path.parent().expect("models dir")).map_err(io_err(&model_path))?;
    save_model(&artifact, &model_path)?;
    let model = SceneClassifier::new(&load_model(&model_path)?)?;

    let held_out = scene_dataset(corpus, state_dir, &labeled, cfg, cfg.stride / 2)?;
    let scene_val_ap = if cfg.stride >= 2 {
        scene_mean_ap(&model, &held_out)?
    } else {
        None
    };

    let done = labeled.len();
    let sizes = batch_sizes(state.video_order.len());
    let next_size = sizes.get(round).copied().unwrap_or(0);
    let next_batch: Vec<String> = state.video_order[done..done + next_size].to_vec();
    let mut pre_annotations = BTreeMap::new();
    for v in &next_batch {
        pre_annotations.insert(v.clone(), pre_annotate(corpus, v, &model, cfg)?);
    }

    let mut history = state.history.clone();
    history.push(RoundRecord {
        round,
        videos: state.pending_batch.clone(),
        pre_annotated_by: state.history.last().map(|r| r.round),
        correction_effort,
        per_video_effort,
        trained_on_videos: labeled.len(),
        scene_model: model_name.clone(),
        scene_val_ap,
    });
    Ok(RoundState {
        format_version: MITL_FORMAT_VERSION,
        round: round + 1,
        video_order: state.video_order.clone(),
        labeled,
        pending_batch: next_batch,
        pre_annotations,
        scene_model: Some(model_name),
        history,
    })
}

/// A simulated annotator: corrects every pending pre-annotation to the
/// bundle's ground-truth scene labels.
pub fn ground_truth_corrections(
    corpus: &Corpus,
    state: &RoundState,
) -> Result<BTreeMap<String, Vec<SceneType>>, MitlError> {
    state
        .pending_batch
        .iter()
        .map(|v| Ok((v.clone(), read_scene_labels(&corpus.video_dir(v).join(SCENE_LABELS_FILE))?)))
        .collect()
}

/// Runs up to `rounds` rounds with the simulated annotator, persisting state
/// after each round. Returns the round history.
pub fn simulate_mitl(
    corpus: &Corpus,
    state_dir: &Path,
    cfg: &MitlConfig,
    rounds: usize,
) -> Result<Vec<RoundRecord>, MitlError> {
    let mut state = RoundState::for_corpus(corpus)?;
    state.save(state_dir)?;
    for _ in 0..rounds {
        if state.is_finished() {
            break;
        }
        let fixes = ground_truth_corrections(corpus, &state)?;
        state = run_mitl_round(&state, &fixes, corpus, state_dir, cfg)?;
        state.save(state_dir)?;
    }
    Ok(state.history)
}
