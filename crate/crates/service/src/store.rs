//! On-disk state behind the HTTP endpoints.
//!
//! Layout under the corpus root:
//!
//! ```text
//! service/
//!   writer.lock
//!   highlight_head.nnm        optional highlight head used for scores
//!   videos/{video_id}.json    one record per video
//!   rounds/{round_id}.json    round status
//!   mitl/                     round state, corrected labels, scene models
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockWriteGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use highlight_core::annotation::{
    correction_effort, run_mitl_round, scene_model_path, MitlConfig, MitlError, RoundState, MITL_STATE_FILE,
};
use highlight_core::cascade::{build_predictor, Artifacts, ModelKind, PredictorConfig};
use highlight_core::corpus::{read_frame, read_manifest, read_scene_labels, Corpus, CorpusError, SCENE_LABELS_FILE};
use highlight_core::nnet::{load_model, save_model, ModelArtifact};
use highlight_core::pipeline::{run_pipeline, sample_indices, FrameSource, SourceMode};
use highlight_core::postprocess::{SegmentPolicy, TimelineDocument};
use highlight_core::types::{HighlightLevel, PipelineConfig, SceneType, Timeline};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lock::WriterLock;

pub const SERVICE_DIR: &str = "service";
/// Environment variable naming the store root.
pub const STORE_ENV: &str = "HF_STORE";
pub const RECORD_FORMAT_VERSION: u32 = 1;
pub const HEAD_MODEL_FILE: &str = "highlight_head.nnm";
const VIDEOS_DIR: &str = "videos";
const ROUNDS_DIR: &str = "rounds";
const MITL_DIR: &str = "mitl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown video {0}")]
    UnknownVideo(String),
    #[error("no prediction for video {0} yet; run a round first")]
    NoPrediction(String),
    #[error("invalid corrections: {0}")]
    Invalid(String),
    #[error("frame {index} is out of range for video {video}")]
    FrameOutOfRange { video: String, index: usize },
    #[error("unknown round {0}")]
    UnknownRound(String),
    #[error("round {0} is still running")]
    RoundRunning(usize),
    #[error("every video is already labeled")]
    Finished,
    #[error("batch videos without corrections: {}", .0.join(", "))]
    Uncorrected(Vec<String>),
    #[error("corrupted record for video {video_id}: {message}")]
    Corrupt { video_id: String, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Mitl(#[from] MitlError),
    #[error("model: {0}")]
    Model(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VideoStatus {
    Unlabeled,
    PreAnnotated,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video_id: String,
    pub num_frames: usize,
    pub fps: f64,
    pub status: VideoStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Round whose model produced it; 0 for the all-game-play empty model.
    pub round: usize,
    pub timeline: TimelineDocument,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelEntry {
    pub frame_index: usize,
    pub annotator_id: String,
    pub level: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    /// Frame index to scene code, applied over the prediction.
    pub scene: BTreeMap<usize, u8>,
    pub levels: Vec<LevelEntry>,
    pub correction_effort: f64,
    pub changed_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub format_version: u32,
    pub video_id: String,
    pub num_frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub prediction: Option<Prediction>,
    pub corrections: Option<Corrections>,
}

impl VideoRecord {
    pub fn status(&self) -> VideoStatus {
        match (&self.prediction, &self.corrections) {
            (_, Some(_)) => VideoStatus::Corrected,
            (Some(_), None) => VideoStatus::PreAnnotated,
            (None, None) => VideoStatus::Unlabeled,
        }
    }

    /// Predicted scenes with corrections applied.
    pub fn corrected_scenes(&self) -> Option<Vec<SceneType>> {
        let p = self.prediction.as_ref()?;
        let mut codes = p.timeline.scene.clone();
        if let Some(c) = &self.corrections {
            for (&f, &code) in &c.scene {
                codes[f] = code;
            }
        }
        codes
            .into_iter()
            .map(|c| SceneType::from_code(c as i64).ok())
            .collect()
    }
}

/// Body of a corrections PUT.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionRequest {
    #[serde(default)]
    pub scene: BTreeMap<usize, i64>,
    #[serde(default)]
    pub levels: Vec<LevelRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRequest {
    pub frame_index: usize,
    pub annotator_id: String,
    pub level: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResponse {
    pub video_id: String,
    pub status: VideoStatus,
    pub correction_effort: f64,
    pub changed_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub correction_effort: f64,
    pub correction_effort_history: Vec<f64>,
    pub scene_val_ap: Option<f64>,
    /// Registered scene model, relative to the store root.
    pub scene_model: String,
    pub trained_on_videos: usize,
    pub next_batch: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecordFile {
    pub round_id: usize,
    pub status: RoundStatus,
    pub videos: Vec<String>,
    pub metrics: Option<RoundMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreConfig {
    pub mitl: MitlConfig,
    pub segments: SegmentPolicy,
    pub lock_timeout: Duration,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            mitl: MitlConfig::default(),
            segments: SegmentPolicy::default(),
            lock_timeout: Duration::from_secs(10),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("record serializes");
    out.push(b'\n');
    out
}

fn is_temp(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.') && n.ends_with(".tmp"))
}

pub struct Store {
    corpus: Corpus,
    dir: PathBuf,
    cfg: StoreConfig,
    lock: WriterLock,
    running: Mutex<Option<usize>>,
    round_gate: RwLock<()>,
    fail_next_write: AtomicBool,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl Store {
    /// Opens the store over the corpus at `root`, creating the service
    /// directory, the round-1 state and missing records on first use.
    pub fn open(root: impl AsRef<Path>, cfg: StoreConfig) -> Result<Arc<Self>, StoreError> {
        let corpus = Corpus::open(root.as_ref())?;
        let dir = corpus.root.join(SERVICE_DIR);
        for sub in [VIDEOS_DIR, ROUNDS_DIR, MITL_DIR] {
            let d = dir.join(sub);
            fs::create_dir_all(&d).map_err(io_err(&d))?;
            // temp files are leftovers of interrupted writes
            for entry in fs::read_dir(&d).map_err(io_err(&d))?.flatten() {
                if is_temp(&entry.path()) {
                    let _ = fs::remove_file(entry.path());
                }
            }
        }
        let store = Arc::new(Self {
            lock: WriterLock::new(&dir, cfg.lock_timeout),
            corpus,
            dir,
            cfg,
            running: Mutex::new(None),
            round_gate: RwLock::new(()),
            fail_next_write: AtomicBool::new(false),
        });
        store.initialize()?;
        Ok(store)
    }

    fn initialize(&self) -> Result<(), StoreError> {
        let _g = self.lock.acquire().map_err(io_err(self.lock.path()))?;
        let mitl = self.mitl_dir();
        let state = if mitl.join(MITL_STATE_FILE).exists() {
            RoundState::load(&mitl)?
        } else {
            let s = RoundState::for_corpus(&self.corpus)?;
            s.save(&mitl)?;
            s
        };
        for v in &self.corpus.index.videos {
            if self.record_path(v).exists() {
                continue;
            }
            let m = read_manifest(&self.corpus.video_dir(v))?;
            let prediction = match state.pre_annotations.get(v) {
                Some(scenes) => Some(self.prediction(v, m.fps, scenes, None, state.round - 1)),
                None => None,
            };
            let record = VideoRecord {
                format_version: RECORD_FORMAT_VERSION,
                video_id: v.clone(),
                num_frames: m.num_frames,
                fps: m.fps,
                width: m.width,
                height: m.height,
                prediction,
                corrections: None,
            };
            self.write_atomic(&self.record_path(v), &to_json(&record))?;
        }
        // a round that was running when the process died never finishes
        let rounds = self.dir.join(ROUNDS_DIR);
        for entry in fs::read_dir(&rounds).map_err(io_err(&rounds))?.flatten() {
            let path = entry.path();
            let Ok(text) = fs::read_to_string(&path) else { continue };
            if let Ok(mut r) = serde_json::from_str::<RoundRecordFile>(&text) {
                if r.status == RoundStatus::Running {
                    r.status = RoundStatus::Failed;
                    r.error = Some("interrupted".into());
                    self.write_atomic(&path, &to_json(&r))?;
                }
            }
        }
        Ok(())
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn config(&self) -> &StoreConfig {
        &self.cfg
    }

    pub fn service_dir(&self) -> &Path {
        &self.dir
    }

    pub fn mitl_dir(&self) -> PathBuf {
        self.dir.join(MITL_DIR)
    }

    pub fn record_path(&self, video: &str) -> PathBuf {
        self.dir.join(VIDEOS_DIR).join(format!("{video}.json"))
    }

    fn round_path(&self, id: usize) -> PathBuf {
        self.dir.join(ROUNDS_DIR).join(format!("{id}.json"))
    }

    /// Makes the next record write stop halfway through its temp file and
    /// fail, as if the process died mid-write.
    pub fn inject_write_fault(&self) {
        self.fail_next_write.store(true, Ordering::SeqCst);
    }

    /// Holds background rounds before training until the guard drops.
    pub fn pause_rounds(&self) -> RwLockWriteGuard<'_, ()> {
        self.round_gate.write().unwrap_or_else(|p| p.into_inner())
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("record");
        let tmp = path.with_file_name(format!(".{name}.tmp"));
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        if self.fail_next_write.swap(false, Ordering::SeqCst) {
            f.write_all(&bytes[..bytes.len() / 2]).map_err(io_err(&tmp))?;
            return Err(StoreError::Io {
                path: tmp,
                source: std::io::Error::other("injected fault: write interrupted"),
            });
        }
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        drop(f);
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    fn check_known(&self, video: &str) -> Result<(), StoreError> {
        if self.corpus.index.videos.iter().any(|v| v == video) {
            Ok(())
        } else {
            Err(StoreError::UnknownVideo(video.to_string()))
        }
    }

    pub fn read_record(&self, video: &str) -> Result<VideoRecord, StoreError> {
        self.check_known(video)?;
        let corrupt = |message: String| StoreError::Corrupt {
            video_id: video.to_string(),
            message,
        };
        let text = fs::read_to_string(self.record_path(video)).map_err(|e| corrupt(e.to_string()))?;
        let record: VideoRecord = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if record.format_version != RECORD_FORMAT_VERSION || record.video_id != video {
            return Err(corrupt("format version or video id mismatch".into()));
        }
        Ok(record)
    }

    fn prediction(&self, video: &str, fps: f64, scenes: &[SceneType], scores: Option<Vec<f64>>, round: usize) -> Prediction {
        let n = scenes.len();
        let stride = self.cfg.mitl.stride;
        let timeline = Timeline {
            video_id: video.to_string(),
            fps,
            scene: scenes.to_vec(),
            score: scores.unwrap_or_else(|| vec![0.0; n]),
            sampled_indices: sample_indices(n, stride),
        };
        Prediction {
            round,
            timeline: TimelineDocument::new(&timeline, stride, &self.cfg.segments),
        }
    }

    /// Every video, sorted by id.
    pub fn list_videos(&self) -> Result<Vec<VideoSummary>, StoreError> {
        let mut ids = self.corpus.index.videos.clone();
        ids.sort();
        ids.iter()
            .map(|v| {
                let r = self.read_record(v)?;
                Ok(VideoSummary {
                    video_id: r.video_id.clone(),
                    num_frames: r.num_frames,
                    fps: r.fps,
                    status: r.status(),
                })
            })
            .collect()
    }

    /// The stored prediction with any corrections applied to its scenes.
    pub fn timeline(&self, video: &str) -> Result<TimelineDocument, StoreError> {
        let r = self.read_record(video)?;
        let scenes = r.corrected_scenes();
        let Some(p) = r.prediction else {
            return Err(StoreError::NoPrediction(video.to_string()));
        };
        let mut doc = p.timeline;
        if let Some(s) = scenes {
            doc.scene = s.iter().map(|s| s.code()).collect();
        }
        Ok(doc)
    }

    /// Parses and applies a corrections body, replacing earlier corrections.
    pub fn put_corrections(&self, video: &str, body: &[u8]) -> Result<CorrectionResponse, StoreError> {
        self.check_known(video)?;
        let req: CorrectionRequest =
            serde_json::from_slice(body).map_err(|e| StoreError::Invalid(e.to_string()))?;
        let _g = self.lock.acquire().map_err(io_err(self.lock.path()))?;
        let mut record = self.read_record(video)?;
        let Some(pred) = &record.prediction else {
            return Err(StoreError::NoPrediction(video.to_string()));
        };
        let n = record.num_frames;
        let mut scene = BTreeMap::new();
        for (&f, &code) in &req.scene {
            if f >= n {
                return Err(StoreError::Invalid(format!("frame {f} is out of range (video has {n} frames)")));
            }
            let s = SceneType::from_code(code).map_err(|e| StoreError::Invalid(format!("frame {f}: {e}")))?;
            scene.insert(f, s.code());
        }
        let mut levels = Vec::with_capacity(req.levels.len());
        for l in &req.levels {
            if l.frame_index >= n {
                return Err(StoreError::Invalid(format!(
                    "level row frame {} is out of range (video has {n} frames)",
                    l.frame_index
                )));
            }
            let level = HighlightLevel::new(l.level)
                .map_err(|e| StoreError::Invalid(format!("frame {}: {e}", l.frame_index)))?;
            if l.annotator_id.is_empty() || l.annotator_id.contains([',', '"', '\n', '\r']) {
                return Err(StoreError::Invalid(format!("bad annotator id {:?}", l.annotator_id)));
            }
            levels.push(LevelEntry {
                frame_index: l.frame_index,
                annotator_id: l.annotator_id.clone(),
                level: level.value(),
            });
        }
        let mut fixed = pred.timeline.scene.clone();
        for (&f, &c) in &scene {
            fixed[f] = c;
        }
        let effort = correction_effort(&pred.timeline.scene, &fixed).expect("same length");
        let changed = pred.timeline.scene.iter().zip(&fixed).filter(|(a, b)| a != b).count();
        record.corrections = Some(Corrections {
            scene,
            levels,
            correction_effort: effort,
            changed_frames: changed,
        });
        self.write_atomic(&self.record_path(video), &to_json(&record))?;
        Ok(CorrectionResponse {
            video_id: video.to_string(),
            status: record.status(),
            correction_effort: effort,
            changed_frames: changed,
        })
    }

    /// Fills corrections for every uncorrected pending video from the
    /// bundle's ground-truth scene labels. Returns the videos touched.
    pub fn correct_from_ground_truth(&self) -> Result<Vec<String>, StoreError> {
        let state = self.mitl_state()?;
        let mut touched = Vec::new();
        for v in &state.pending_batch {
            let r = self.read_record(v)?;
            if r.corrections.is_some() {
                continue;
            }
            let Some(p) = &r.prediction else { continue };
            let truth = read_scene_labels(&self.corpus.video_dir(v).join(SCENE_LABELS_FILE))?;
            let req = CorrectionRequest {
                scene: truth
                    .iter()
                    .enumerate()
                    .filter(|(i, s)| p.timeline.scene.get(*i) != Some(&s.code()))
                    .map(|(i, s)| (i, s.code() as i64))
                    .collect(),
                levels: Vec::new(),
            };
            self.put_corrections(v, &serde_json::to_vec(&req).expect("request serializes"))?;
            touched.push(v.clone());
        }
        Ok(touched)
    }

    pub fn mitl_state(&self) -> Result<RoundState, StoreError> {
        Ok(RoundState::load(&self.mitl_dir())?)
    }

    /// Saves a highlight head used to score later pre-annotations. It must
    /// be a two-class classifier at the round input size.
    pub fn register_highlight_head(&self, head: &ModelArtifact) -> Result<(), StoreError> {
        let (want_head, want_classes) = ModelKind::CascadeBinary.required_head().expect("cascade kind has a head");
        let size = self.cfg.mitl.input_size;
        if head.spec.head != want_head || head.spec.num_classes != want_classes {
            return Err(StoreError::Model(format!(
                "highlight head must be {want_head:?} with {want_classes} classes"
            )));
        }
        if head.spec.input.height != size || head.spec.input.width != size {
            return Err(StoreError::Model(format!("highlight head must take {size}x{size} input")));
        }
        let _g = self.lock.acquire().map_err(io_err(self.lock.path()))?;
        save_model(head, self.dir.join(HEAD_MODEL_FILE)).map_err(|e| StoreError::Model(e.to_string()))
    }

    pub fn round(&self, id: &str) -> Result<RoundRecordFile, StoreError> {
        let unknown = || StoreError::UnknownRound(id.to_string());
        let n: usize = id.parse().map_err(|_| unknown())?;
        let path = self.round_path(n);
        let text = fs::read_to_string(&path).map_err(|_| unknown())?;
        serde_json::from_str(&text).map_err(|e| StoreError::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }

    /// Starts the next round on a background thread and returns its id.
    pub fn start_round(self: &Arc<Self>) -> Result<usize, StoreError> {
        self.launch_round().map(|(id, _)| id)
    }

    /// Runs the next round to completion.
    pub fn run_round(self: &Arc<Self>) -> Result<RoundRecordFile, StoreError> {
        let (id, handle) = self.launch_round()?;
        handle.join().expect("round thread");
        self.round(&id.to_string())
    }

    fn launch_round(self: &Arc<Self>) -> Result<(usize, JoinHandle<()>), StoreError> {
        let mut running = self.running.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(r) = *running {
            return Err(StoreError::RoundRunning(r));
        }
        let guard = self.lock.acquire().map_err(io_err(self.lock.path()))?;
        let state = self.mitl_state()?;
        if state.is_finished() {
            return Err(StoreError::Finished);
        }
        let mut corrections = BTreeMap::new();
        let mut missing = Vec::new();
        for v in &state.pending_batch {
            let r = self.read_record(v)?;
            match (&r.corrections, r.corrected_scenes()) {
                (Some(_), Some(track)) => {
                    corrections.insert(v.clone(), track);
                }
                _ => missing.push(v.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(StoreError::Uncorrected(missing));
        }
        let id = state.round;
        let file = RoundRecordFile {
            round_id: id,
            status: RoundStatus::Running,
            videos: state.pending_batch.clone(),
            metrics: None,
            error: None,
        };
        self.write_atomic(&self.round_path(id), &to_json(&file))?;
        *running = Some(id);
        drop(guard);
        drop(running);

        let store = Arc::clone(self);
        let handle = std::thread::Builder::new()
            .name(format!("round-{id}"))
            .spawn(move || store.finish_round(file, state, corrections))
            .map_err(io_err(&self.dir))?;
        Ok((id, handle))
    }

    fn finish_round(&self, mut file: RoundRecordFile, state: RoundState, corrections: BTreeMap<String, Vec<SceneType>>) {
        drop(self.round_gate.read().unwrap_or_else(|p| p.into_inner()));
        let result = run_mitl_round(&state, &corrections, &self.corpus, &self.mitl_dir(), &self.cfg.mitl)
            .map_err(StoreError::from)
            .and_then(|next| self.commit_round(&next));
        let outcome = self.lock.acquire().map_err(io_err(self.lock.path())).and_then(|_g| {
            match result {
                Ok(metrics) => {
                    file.status = RoundStatus::Done;
                    file.metrics = Some(metrics);
                }
                Err(e) => {
                    log::error!("round {}: {e}", file.round_id);
                    file.status = RoundStatus::Failed;
                    file.error = Some(e.to_string());
                }
            }
            self.write_atomic(&self.round_path(file.round_id), &to_json(&file))
        });
        if let Err(e) = outcome {
            log::error!("round {}: recording status: {e}", file.round_id);
        }
        *self.running.lock().unwrap_or_else(|p| p.into_inner()) = None;
    }

    fn head_scores(&self, video: &str, state: &RoundState) -> Result<Option<Vec<f64>>, StoreError> {
        let head_path = self.dir.join(HEAD_MODEL_FILE);
        let (true, Some(scene_name)) = (head_path.exists(), &state.scene_model) else {
            return Ok(None);
        };
        let model_err = |e: &dyn std::fmt::Display| StoreError::Model(e.to_string());
        let artifacts = Artifacts {
            scene: Some(load_model(scene_model_path(&self.mitl_dir(), scene_name)).map_err(|e| model_err(&e))?),
            head: Some(load_model(&head_path).map_err(|e| model_err(&e))?),
        };
        let predictor = build_predictor(
            ModelKind::CascadeBinary,
            &artifacts,
            PredictorConfig {
                threshold: self.cfg.segments.threshold,
                rng_seed: 0,
            },
        )
        .map_err(|e| model_err(&e))?;
        let cfg = PipelineConfig {
            stride: self.cfg.mitl.stride,
            input_size: self.cfg.mitl.input_size,
            workers: self.cfg.mitl.workers.max(1),
            highlight_threshold: self.cfg.segments.threshold,
            ..PipelineConfig::default()
        };
        let source =
            FrameSource::open(self.corpus.video_dir(video), SourceMode::ImageSequence).map_err(|e| model_err(&e))?;
        let run = run_pipeline(source, &predictor, &cfg).map_err(|e| model_err(&e))?;
        Ok(Some(run.timeline.score))
    }

    fn commit_round(&self, next: &RoundState) -> Result<RoundMetrics, StoreError> {
        let rec = next.history.last().expect("a finished round is recorded");
        let mut predictions = Vec::new();
        for v in &next.pending_batch {
            let scores = self.head_scores(v, next)?;
            let fps = read_manifest(&self.corpus.video_dir(v))?.fps;
            predictions.push((v, self.prediction(v, fps, &next.pre_annotations[v], scores, rec.round)));
        }
        let _g = self.lock.acquire().map_err(io_err(self.lock.path()))?;
        for (v, p) in predictions {
            let mut r = self.read_record(v)?;
            r.prediction = Some(p);
            self.write_atomic(&self.record_path(v), &to_json(&r))?;
        }
        next.save(&self.mitl_dir())?;
        let model = Path::new(SERVICE_DIR).join(MITL_DIR).join("models").join(&rec.scene_model);
        Ok(RoundMetrics {
            correction_effort: rec.correction_effort,
            correction_effort_history: next.effort_history(),
            scene_val_ap: rec.scene_val_ap,
            scene_model: model.to_string_lossy().into_owned(),
            trained_on_videos: rec.trained_on_videos,
            next_batch: next.pending_batch.clone(),
        })
    }

    /// The stored frame as PNG bytes.
    pub fn frame_png(&self, video: &str, index: usize) -> Result<Vec<u8>, StoreError> {
        self.check_known(video)?;
        let dir = self.corpus.video_dir(video);
        let manifest = read_manifest(&dir)?;
        if index >= manifest.num_frames {
            return Err(StoreError::FrameOutOfRange {
                video: video.to_string(),
                index,
            });
        }
        let frame = read_frame(&dir, &manifest, index)?;
        let (w, h) = (frame.width() as u32, frame.height() as u32);
        let img = image::RgbImage::from_raw(w, h, frame.into_pixels()).expect("frame buffer matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| StoreError::Model(format!("png encoding: {e}")))?;
        Ok(out.into_inner())
    }
}
