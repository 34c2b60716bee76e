use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{average_precision, recall_with_rule, DecisionRule, MetricError};
use crate::annotation::{consensus, Consensus};
use crate::cascade::{CascadeError, ModelKind, SceneClassifier, REGRESSION_CUTOFF, REGRESSION_MAX};
use crate::corpus::{read_level_rows, read_scene_labels, Corpus, CorpusError, HIGHLIGHT_LEVELS_FILE, SCENE_LABELS_FILE};
use crate::nnet::NnetError;
use crate::pipeline::{run_pipeline, FramePredictor, FrameSource, PipelineError, SourceMode, ThroughputReport};
use crate::types::{PipelineConfig, SceneType};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("video {video}: {source}")]
    Metric { video: String, source: MetricError },
    #[error(transparent)]
    Metrics(#[from] MetricError),
    #[error("video {video}: {source}")]
    Pipeline { video: String, source: PipelineError },
    #[error("video {video}: timeline has {found} frames, labels have {expected}")]
    LengthMismatch {
        video: String,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] CascadeError),
    #[error(transparent)]
    Training(#[from] NnetError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no videos to evaluate")]
    NoVideos,
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Ground truth for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoLabels {
    pub scenes: Vec<SceneType>,
    pub consensus: Consensus,
}

pub fn video_labels(dir: &Path) -> Result<VideoLabels, CorpusError> {
    let scenes = read_scene_labels(&dir.join(SCENE_LABELS_FILE))?;
    let rows = read_level_rows(&dir.join(HIGHLIGHT_LEVELS_FILE))?;
    let consensus = consensus(&scenes, &rows);
    Ok(VideoLabels { scenes, consensus })
}

/// The decision rule a kind's recall is computed with.
pub fn decision_rule(kind: ModelKind, threshold: f64) -> DecisionRule {
    match kind {
        ModelKind::CascadeRegression => DecisionRule::ScaledAbove {
            scale: REGRESSION_MAX,
            threshold: REGRESSION_CUTOFF,
        },
        _ => DecisionRule::AtLeast(threshold),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub ap_percent: f64,
    pub recall_percent: f64,
    pub fps: f64,
    /// Head evaluations over classified frames.
    pub head_eval_fraction: f64,
}

pub const REPORT_HEADER: &str = "model,ap_percent,recall_percent,fps,head_eval_fraction";

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub row: EvalRow,
    /// Dense scores over all test frames, videos concatenated in order.
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub throughput: Vec<ThroughputReport>,
}

fn run_video(
    corpus: &Corpus,
    video: &str,
    predictor: &dyn FramePredictor,
    cfg: &PipelineConfig,
) -> Result<(Vec<f64>, Vec<bool>, ThroughputReport), EvalError> {
    let dir = corpus.video_dir(video);
    let labels = video_labels(&dir)?;
    let wrap = |source| EvalError::Pipeline {
        video: video.to_string(),
        source,
    };
    let source = FrameSource::open(&dir, SourceMode::ImageSequence).map_err(wrap)?;
    let run = run_pipeline(source, predictor, cfg).map_err(wrap)?;
    if run.timeline.score.len() != labels.consensus.labels.len() {
        return Err(EvalError::LengthMismatch {
            video: video.to_string(),
            expected: labels.consensus.labels.len(),
            found: run.timeline.score.len(),
        });
    }
    Ok((run.timeline.score, labels.consensus.labels, run.report))
}

/// Runs the pipeline over each video (up to `video_workers` at once) and
/// scores the concatenated dense timelines.
pub fn evaluate_model(
    model: &str,
    predictor: &dyn FramePredictor,
    rule: DecisionRule,
    corpus: &Corpus,
    videos: &[String],
    cfg: &PipelineConfig,
    video_workers: usize,
) -> Result<Evaluation, EvalError> {
    if videos.is_empty() {
        return Err(EvalError::NoVideos);
    }
    let per_video: Vec<_> = if video_workers <= 1 {
        videos.iter().map(|v| run_video(corpus, v, predictor, cfg)).collect()
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<_>>> = videos.iter().map(|_| Default::default()).collect();
        std::thread::scope(|s| {
            for _ in 0..video_workers.min(videos.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    let Some(v) = videos.get(i) else { return };
                    *slots[i].lock().expect("slot") = Some(run_video(corpus, v, predictor, cfg));
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot").expect("every video ran"))
            .collect()
    };
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut throughput = Vec::new();
    for r in per_video {
        let (s, l, t) = r?;
        scores.extend(s);
        labels.extend(l);
        throughput.push(t);
    }
    let ap = average_precision(&scores, &labels)?;
    let recall = recall_with_rule(&scores, &labels, rule)?;
    let classified: usize = throughput.iter().map(|t| t.frames_classified).sum();
    let seconds: f64 = throughput.iter().map(|t| t.timing_basis_s).sum();
    let heads: usize = throughput.iter().map(|t| t.head_evals).sum();
    Ok(Evaluation {
        row: EvalRow {
            model: model.to_string(),
            ap_percent: 100.0 * ap,
            recall_percent: 100.0 * recall,
            fps: if seconds > 0.0 { classified as f64 / seconds } else { f64::INFINITY },
            head_eval_fraction: heads as f64 / classified.max(1) as f64,
        },
        scores,
        labels,
        throughput,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneClassMetrics {
    pub scene: SceneType,
    pub support: usize,
    pub ap_percent: Option<f64>,
    pub recall_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGateReport {
    pub frames: usize,
    pub per_class: Vec<SceneClassMetrics>,
}

/// Gate pass line: every class present reaches it on both AP and recall.
pub const SCENE_GATE_PASS_PERCENT: f64 = 99.0;

impl SceneGateReport {
    pub fn passes(&self) -> bool {
        self.per_class.iter().all(|c| {
            c.support == 0
                || (c.ap_percent.unwrap_or(0.0) >= SCENE_GATE_PASS_PERCENT
                    && c.recall_percent.unwrap_or(0.0) >= SCENE_GATE_PASS_PERCENT)
        })
    }
}

/// One-vs-rest AP and argmax recall per scene class over the sampled frames
/// of `videos`.
pub fn scene_gate_metrics(
    model: &SceneClassifier,
    corpus: &Corpus,
    videos: &[String],
    cfg: &PipelineConfig,
) -> Result<SceneGateReport, EvalError> {
    let mut probs = Vec::new();
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for v in videos {
        let dir = corpus.video_dir(v);
        let scenes = read_scene_labels(&dir.join(SCENE_LABELS_FILE))?;
        let wrap = |source| EvalError::Pipeline {
            video: v.clone(),
            source,
        };
        let source = FrameSource::open(&dir, SourceMode::ImageSequence).map_err(wrap)?;
        let run = run_pipeline(source, model, cfg).map_err(wrap)?;
        for (i, p) in run.predictions {
            probs.push(p.scene_probs);
            predicted.push(p.scene);
            truth.push(scenes[i]);
        }
    }
    let per_class = SceneType::ALL
        .iter()
        .enumerate()
        .map(|(c, &scene)| {
            let labels: Vec<bool> = truth.iter().map(|&t| t == scene).collect();
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let support = labels.iter().filter(|&&l| l).count();
            let hits = truth
                .iter()
                .zip(&predicted)
                .filter(|(t, p)| **t == scene && **p == scene)
                .count();
            SceneClassMetrics {
                scene,
                support,
                ap_percent: average_precision(&scores, &labels).ok().map(|a| 100.0 * a),
                recall_percent: (support > 0).then(|| 100.0 * hits as f64 / support as f64),
            }
        })
        .collect();
    Ok(SceneGateReport {
        frames: truth.len(),
        per_class,
    })
}

pub fn report_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.model, r.ap_percent, r.recall_percent, r.fps, r.head_eval_fraction
        )
        .expect("write to string");
    }
    out
}

/// Aligned plain-text version of the report.
pub fn report_table(rows: &[EvalRow]) -> String {
    let width = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    writeln!(
        out,
        "{:<width$}  {:>8}  {:>8}  {:>9}  {:>10}",
        "model", "AP %", "recall %", "fps", "head evals"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<width$}  {:>8.2}  {:>8.2}  {:>9.1}  {:>10.3}",
            r.model, r.ap_percent, r.recall_percent, r.fps, r.head_eval_fraction
        )
        .unwrap();
    }
    out
}

pub fn write_report(rows: &[EvalRow], path: &Path) -> Result<(), EvalError> {
    fs::write(path, report_csv(rows)).map_err(io_err(path))
}

pub fn read_report(path: &Path) -> Result<Vec<EvalRow>, EvalError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .deserialize()
        .collect::<Result<Vec<EvalRow>, _>>()
        .map_err(|e| EvalError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
}
