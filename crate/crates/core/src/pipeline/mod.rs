//! Streaming ingestion and the staged read → resize → classify → assemble
//! pipeline.

mod source;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, TrySendError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use source::*;

use crate::corpus::CorpusError;
use crate::postprocess::{fill_scene_nearest, interpolate, PostprocessError};
use crate::types::{FrameImage, FrameRef, PipelineConfig, SceneType, Timeline, TypeError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io error{}: {message}", at(*frame_index))]
    Io {
        frame_index: Option<usize>,
        message: String,
    },
    #[error("bad stream header: {0}")]
    BadStreamHeader(String),
    #[error("predictor failed at frame {frame_index}: {message}")]
    Predictor { frame_index: usize, message: String },
    #[error(transparent)]
    Config(#[from] TypeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Postprocess(#[from] PostprocessError),
    #[error("source yielded no frames")]
    EmptySource,
}

fn at(index: Option<usize>) -> String {
    index.map(|i| format!(" at frame {i}")).unwrap_or_default()
}

/// Output of one predictor call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub scene: SceneType,
    pub scene_probs: [f64; 4],
    /// Ranking score in `[0, 1]`.
    pub score: f64,
    pub is_highlight: bool,
    /// Whether a scene model ran for this frame.
    pub scene_evaluated: bool,
    /// Whether a highlight head ran for this frame.
    pub head_evaluated: bool,
}

/// Anything that scores a single resized frame. Must be callable from
/// several workers at once.
pub trait FramePredictor: Sync {
    fn predict(&self, frame: &FrameRef, image: &FrameImage) -> Result<FramePrediction, String>;
}

impl<F> FramePredictor for F
where
    F: Fn(&FrameRef, &FrameImage) -> Result<FramePrediction, String> + Sync,
{
    fn predict(&self, frame: &FrameRef, image: &FrameImage) -> Result<FramePrediction, String> {
        self(frame, image)
    }
}

pub const FPS_DEFINITION_WALL: &str = "frames_classified / wall-clock seconds of the whole run";
pub const FPS_DEFINITION_BUSY: &str =
    "frames_classified / seconds during which at least one classify worker was busy (source pacing excluded)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub frames_classified: usize,
    pub wall_time_s: f64,
    /// Seconds the rate is computed over; see `fps_definition`.
    pub timing_basis_s: f64,
    pub fps_processed: f64,
    pub fps_definition: String,
    pub source_fps: f64,
    pub stride: usize,
    pub realtime_required_fps: f64,
    pub realtime_ok: bool,
    pub realtime_pacing: bool,
    pub dropped_frames: usize,
    pub workers: usize,
    pub scene_evals: usize,
    pub head_evals: usize,
}

impl ThroughputReport {
    pub fn new(frames_classified: usize, seconds: f64, source_fps: f64, stride: usize) -> Self {
        let fps_processed = if seconds > 0.0 {
            frames_classified as f64 / seconds
        } else {
            f64::INFINITY
        };
        let realtime_required_fps = source_fps / stride as f64;
        Self {
            frames_classified,
            wall_time_s: seconds,
            timing_basis_s: seconds,
            fps_processed,
            fps_definition: FPS_DEFINITION_WALL.into(),
            source_fps,
            stride,
            realtime_required_fps,
            realtime_ok: fps_processed >= realtime_required_fps,
            realtime_pacing: false,
            dropped_frames: 0,
            workers: 1,
            scene_evals: 0,
            head_evals: 0,
        }
    }
}

/// Everything produced by one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub timeline: Timeline,
    pub report: ThroughputReport,
    /// Per classified frame, in index order.
    pub predictions: Vec<(usize, FramePrediction)>,
}

/// Total length of the union of `[start, end)` intervals.
fn union_length(mut spans: Vec<(Instant, Instant)>) -> Duration {
    spans.sort_by_key(|s| s.0);
    let mut total = Duration::ZERO;
    let mut cur: Option<(Instant, Instant)> = None;
    for (s, e) in spans {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        total += ce - cs;
    }
    total
}

struct Classified {
    index: usize,
    result: Result<FramePrediction, String>,
    span: (Instant, Instant),
}

pub fn run_pipeline(
    source: FrameSource,
    predictor: &dyn FramePredictor,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    config.validate()?;
    let info = source.info().clone();
    let stride = config.stride;
    let size = config.input_size;
    let cap = config.queue_capacity;
    let (read_tx, read_rx) = bounded::<(usize, FrameImage)>(cap);
    let (resized_tx, resized_rx) = bounded::<(usize, FrameImage)>(cap);
    let (out_tx, out_rx) = unbounded::<Classified>();
    let stop = AtomicBool::new(false);
    let dropped = AtomicUsize::new(0);
    let read_error: Mutex<Option<PipelineError>> = Mutex::new(None);
    let started = Instant::now();

    let mut results: BTreeMap<usize, Classified> = BTreeMap::new();
    let mut first_predict_error: Option<(usize, String)> = None;

    thread::scope(|s| {
        // read
        let stop_r = &stop;
        let dropped_r = &dropped;
        let read_error_r = &read_error;
        let fps = info.fps;
        s.spawn(move || {
            let mut sampler = source.sample(stride).peekable();
            while let Some(next) = sampler.next() {
                if stop_r.load(Ordering::Relaxed) {
                    return;
                }
                let item = match next {
                    Err(e) => {
                        *read_error_r.lock().expect("lock") = Some(e);
                        stop_r.store(true, Ordering::Relaxed);
                        return;
                    }
                    Ok(item) => item,
                };
                if !config.realtime_pacing {
                    if read_tx.send(item).is_err() {
                        return;
                    }
                    continue;
                }
                // release at source rate
                let due = started + Duration::from_secs_f64(item.0 as f64 / fps);
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
                // the final frame is never dropped
                if sampler.peek().is_none() {
                    let _ = read_tx.send(item);
                    return;
                }
                match read_tx.try_send(item) {
                    Ok(()) => {}
                    Err(TrySendError::Full(_)) => {
                        dropped_r.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(TrySendError::Disconnected(_)) => return,
                }
            }
        });

        // resize
        s.spawn(move || {
            for (i, f) in read_rx {
                let r = f.resize_nearest(size);
                if resized_tx.send((i, r)).is_err() {
                    return;
                }
            }
        });

        // classify
        for _ in 0..config.workers {
            let rx = resized_rx.clone();
            let tx = out_tx.clone();
            let stop_c = &stop;
            let video_id = info.video_id.clone();
            s.spawn(move || {
                for (index, image) in rx {
                    if stop_c.load(Ordering::Relaxed) {
                        return;
                    }
                    let frame = FrameRef::new(video_id.clone(), index, fps);
                    let t0 = Instant::now();
                    let result = predictor.predict(&frame, &image);
                    let span = (t0, Instant::now());
                    if result.is_err() {
                        stop_c.store(true, Ordering::Relaxed);
                    }
                    if tx.send(Classified { index, result, span }).is_err() {
                        return;
                    }
                }
            });
        }
        drop(resized_rx);
        drop(out_tx);

        // assemble
        for c in out_rx {
            if let Err(msg) = &c.result {
                if first_predict_error.as_ref().is_none_or(|(i, _)| c.index < *i) {
                    first_predict_error = Some((c.index, msg.clone()));
                }
            }
            results.insert(c.index, c);
        }
    });
    let wall = started.elapsed();

    if let Some((frame_index, message)) = first_predict_error {
        return Err(PipelineError::Predictor { frame_index, message });
    }
    if let Some(e) = read_error.into_inner().expect("lock") {
        return Err(e);
    }
    let Some((&last, _)) = results.last_key_value() else {
        return Err(PipelineError::EmptySource);
    };
    let num_frames = info.num_frames.unwrap_or(last + 1);

    let spans: Vec<_> = results.values().map(|c| c.span).collect();
    let predictions: Vec<(usize, FramePrediction)> = results
        .into_iter()
        .map(|(i, c)| (i, c.result.expect("errors handled above")))
        .collect();
    let scores: Vec<(usize, f64)> = predictions.iter().map(|(i, p)| (*i, p.score)).collect();
    let scenes: Vec<(usize, SceneType)> = predictions.iter().map(|(i, p)| (*i, p.scene)).collect();
    let timeline = Timeline {
        video_id: info.video_id.clone(),
        fps: info.fps,
        score: interpolate(&scores, num_frames)?,
        scene: fill_scene_nearest(&scenes, num_frames)?,
        sampled_indices: predictions.iter().map(|(i, _)| *i).collect(),
    };

    let (basis, definition) = if config.realtime_pacing {
        (union_length(spans).as_secs_f64(), FPS_DEFINITION_BUSY)
    } else {
        (wall.as_secs_f64(), FPS_DEFINITION_WALL)
    };
    let mut report = ThroughputReport::new(predictions.len(), basis, info.fps, stride);
    report.wall_time_s = wall.as_secs_f64();
    report.fps_definition = definition.into();
    report.realtime_pacing = config.realtime_pacing;
    report.dropped_frames = dropped.into_inner();
    report.workers = config.workers;
    report.scene_evals = predictions.iter().filter(|(_, p)| p.scene_evaluated).count();
    report.head_evals = predictions.iter().filter(|(_, p)| p.head_evaluated).count();
    Ok(PipelineRun {
        timeline,
        report,
        predictions,
    })
}
