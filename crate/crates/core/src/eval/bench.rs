use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::harness::{
    decision_rule, evaluate_model, io_err, report_table, scene_gate_metrics, video_labels, write_report, EvalError,
    EvalRow, SceneGateReport,
};
use crate::cascade::{
    binary_labels, build_predictor, multiclass_labels, scene_labels, Artifacts, ModelKind, PredictorConfig,
    SceneClassifier, BINARY_HIGHLIGHT_CLASS, MULTICLASS_HIGHLIGHT_CLASS,
};
use crate::corpus::{load_frames, read_level_rows, Corpus, GROUND_TRUTH_ID, HIGHLIGHT_LEVELS_FILE};
use crate::keyed::{combine, hash_str};
use crate::nnet::{
    inverse_frequency_weights, load_model, save_model, train, Dataset, Head, ModelArtifact, NetworkSpec, Targets, TrainConfig,
};
use crate::pipeline::sample_indices;
use crate::types::{FrameImage, PipelineConfig, SceneType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub train: TrainConfig,
    /// Training frames are every `train_stride`-th frame of each train video.
    pub train_stride: usize,
    pub pipeline: PipelineConfig,
    /// Seed for the random-score kinds.
    pub rng_seed: u64,
    pub video_workers: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            train_stride: 10,
            pipeline: PipelineConfig::default(),
            rng_seed: 0,
            video_workers: 1,
        }
    }
}

/// Every artifact the six kinds need.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub scene: ModelArtifact,
    pub cascade_binary: ModelArtifact,
    pub cascade_regression: ModelArtifact,
    pub single_binary: ModelArtifact,
    pub single_multiclass: ModelArtifact,
}

impl TrainedModels {
    pub fn artifacts_for(&self, kind: ModelKind) -> Artifacts {
        let scene = kind.is_cascade().then(|| self.scene.clone());
        let head = match kind {
            ModelKind::CascadeBinary => Some(self.cascade_binary.clone()),
            ModelKind::CascadeRegression => Some(self.cascade_regression.clone()),
            ModelKind::SingleBinary => Some(self.single_binary.clone()),
            ModelKind::SingleMulticlass => Some(self.single_multiclass.clone()),
            ModelKind::SingleRandom | ModelKind::CascadeRandom => None,
        };
        Artifacts { scene, head }
    }

    /// `(file name, artifact)` pairs.
    pub fn named(&self) -> [(&'static str, &ModelArtifact); 5] {
        [
            (SCENE_MODEL_FILE, &self.scene),
            ("cascade_binary.nnm", &self.cascade_binary),
            ("cascade_regression.nnm", &self.cascade_regression),
            ("single_binary.nnm", &self.single_binary),
            ("single_multiclass.nnm", &self.single_multiclass),
        ]
    }

    pub fn save(&self, dir: &Path) -> Result<(), EvalError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, a) in self.named() {
            save_model(a, dir.join(name))?;
        }
        Ok(())
    }
}

pub const SCENE_MODEL_FILE: &str = "scene.nnm";

/// File name of the highlight head `kind` uses in a model directory.
pub fn head_model_file(kind: ModelKind) -> Option<&'static str> {
    match kind {
        ModelKind::CascadeBinary => Some("cascade_binary.nnm"),
        ModelKind::CascadeRegression => Some("cascade_regression.nnm"),
        ModelKind::SingleBinary => Some("single_binary.nnm"),
        ModelKind::SingleMulticlass => Some("single_multiclass.nnm"),
        ModelKind::SingleRandom | ModelKind::CascadeRandom => None,
    }
}

/// Loads the artifacts `kind` needs from a directory written by
/// [`TrainedModels::save`].
pub fn load_artifacts(dir: &Path, kind: ModelKind) -> Result<Artifacts, EvalError> {
    let scene = if kind.is_cascade() {
        Some(load_model(dir.join(SCENE_MODEL_FILE))?)
    } else {
        None
    };
    let head = head_model_file(kind).map(|f| load_model(dir.join(f))).transpose()?;
    Ok(Artifacts { scene, head })
}

/// Stride-sampled training frames with every label the heads need.
#[derive(Debug, Clone, Default)]
pub struct TrainingFrames {
    pub images: Vec<FrameImage>,
    pub scenes: Vec<SceneType>,
    pub scores: Vec<f64>,
    pub highlight: Vec<bool>,
}

pub fn load_training_frames(
    corpus: &Corpus,
    videos: &[String],
    stride: usize,
    input_size: usize,
) -> Result<TrainingFrames, EvalError> {
    let mut out = TrainingFrames::default();
    for v in videos {
        let dir = corpus.video_dir(v);
        let labels = video_labels(&dir)?;
        let idx = sample_indices(labels.scenes.len(), stride);
        out.images.extend(load_frames(&dir, &idx, input_size)?);
        for &i in &idx {
            out.scenes.push(labels.scenes[i]);
            out.scores.push(labels.consensus.scores[i]);
            out.highlight.push(labels.consensus.labels[i]);
        }
    }
    Ok(out)
}

fn classes(frames: &TrainingFrames, keep: &[usize], label: impl Fn(usize) -> usize, names: Vec<String>) -> Dataset {
    Dataset {
        images: keep.iter().map(|&i| frames.images[i].clone()).collect(),
        targets: Targets::Classes(keep.iter().map(|&i| label(i)).collect()),
        class_names: names,
    }
}

fn weighted(cfg: &TrainConfig, data: &Dataset, num_classes: usize, tag: &str) -> TrainConfig {
    let weights = match &data.targets {
        Targets::Classes(c) => Some(inverse_frequency_weights(c, num_classes)),
        Targets::Scalars(_) => None,
    };
    TrainConfig {
        seed: combine(&[cfg.seed, hash_str(tag)]),
        class_weights: weights,
        ..cfg.clone()
    }
}

/// Trains the scene gate and the four highlight heads. Cascade heads see
/// game-play frames only; single heads see everything.
pub fn train_models(frames: &TrainingFrames, input_size: usize, cfg: &TrainConfig) -> Result<TrainedModels, EvalError> {
    let all: Vec<usize> = (0..frames.images.len()).collect();
    let game: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| frames.scenes[i] == SceneType::GamePlay)
        .collect();
    let binary = |i: usize| {
        if frames.highlight[i] {
            BINARY_HIGHLIGHT_CLASS
        } else {
            1 - BINARY_HIGHLIGHT_CLASS
        }
    };
    let classifier = |n: usize| NetworkSpec::tinynet(n, input_size, Head::SoftmaxClassifier);

    let scene_data = classes(frames, &all, |i| frames.scenes[i].code() as usize, scene_labels());
    let scene = train(&classifier(4), &scene_data, &weighted(cfg, &scene_data, 4, "scene"))?;
    drop(scene_data);

    let data = classes(frames, &game, binary, binary_labels());
    let cascade_binary = train(&classifier(2), &data, &weighted(cfg, &data, 2, "cascade-binary"))?;
    drop(data);

    let data = Dataset {
        images: game.iter().map(|&i| frames.images[i].clone()).collect(),
        targets: Targets::Scalars(game.iter().map(|&i| frames.scores[i]).collect()),
        class_names: vec!["highlight_score".into()],
    };
    let spec = NetworkSpec::tinynet(1, input_size, Head::ScalarRegressor);
    let cascade_regression = train(&spec, &data, &weighted(cfg, &data, 1, "cascade-regression"))?;
    drop(data);

    let data = classes(frames, &all, binary, binary_labels());
    let single_binary = train(&classifier(2), &data, &weighted(cfg, &data, 2, "single-binary"))?;
    drop(data);

    let multi = |i: usize| {
        if frames.highlight[i] {
            MULTICLASS_HIGHLIGHT_CLASS
        } else {
            1 + frames.scenes[i].code() as usize
        }
    };
    let data = classes(frames, &all, multi, multiclass_labels());
    let single_multiclass = train(&classifier(5), &data, &weighted(cfg, &data, 5, "single-multiclass"))?;

    Ok(TrainedModels {
        scene,
        cascade_binary,
        cascade_regression,
        single_binary,
        single_multiclass,
    })
}

/// Level-0 to level-3 ratio over ground-truth game-play frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Imbalance {
    pub game_frames: usize,
    pub level_counts: [usize; 4],
    /// Share of all frames with a positive consensus label.
    pub positive_share: f64,
}

impl Imbalance {
    pub fn none_to_top_ratio(&self) -> f64 {
        self.level_counts[0] as f64 / self.level_counts[3].max(1) as f64
    }
}

pub fn imbalance(corpus: &Corpus, videos: &[String]) -> Result<Imbalance, EvalError> {
    let mut level_counts = [0usize; 4];
    let (mut game_frames, mut frames, mut positives) = (0, 0, 0);
    for v in videos {
        let dir = corpus.video_dir(v);
        let labels = video_labels(&dir)?;
        frames += labels.scenes.len();
        positives += labels.consensus.positives();
        for r in read_level_rows(&dir.join(HIGHLIGHT_LEVELS_FILE))? {
            if r.annotator_id == GROUND_TRUTH_ID && labels.scenes[r.frame_index] == SceneType::GamePlay {
                level_counts[r.level.value() as usize] += 1;
                game_frames += 1;
            }
        }
    }
    Ok(Imbalance {
        game_frames,
        level_counts,
        positive_share: positives as f64 / frames.max(1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<EvalRow>,
    pub scene_gate: SceneGateReport,
    pub imbalance: Imbalance,
    pub train_frames: usize,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

impl BenchReport {
    pub fn row(&self, kind: ModelKind) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.model == kind.name())
    }
}

pub const REPORT_CSV: &str = "report.csv";
pub const MODELS_DIR: &str = "models";
pub const REPORT_TXT: &str = "report.txt";
pub const BENCH_JSON: &str = "bench.json";

/// Header lines for the text report.
pub fn report_notes(cfg: &BenchConfig) -> String {
    format!(
        "# AP: non-interpolated, ties ranked by ascending frame index, over all test frames\n\
         # recall: score >= {} (cascade-regression: raw value > 1.0)\n\
         # stride {}, input {}x{}\n",
        cfg.pipeline.highlight_threshold, cfg.pipeline.stride, cfg.pipeline.input_size, cfg.pipeline.input_size
    )
}

/// Trains on the train split, evaluates all six kinds on the test split and,
/// with `out`, writes the report files and models there.
pub fn run_benchmark_suite(corpus: &Corpus, cfg: &BenchConfig, out: Option<&Path>) -> Result<BenchReport, EvalError> {
    let split = &corpus.index.split;
    let size = cfg.pipeline.input_size;

    let t0 = Instant::now();
    let frames = load_training_frames(corpus, &split.train, cfg.train_stride, size)?;
    let models = train_models(&frames, size, &cfg.train)?;
    let train_seconds = t0.elapsed().as_secs_f64();
    log::info!("trained 5 models on {} frames in {train_seconds:.1}s", frames.images.len());

    let t1 = Instant::now();
    let predictor_cfg = PredictorConfig {
        threshold: cfg.pipeline.highlight_threshold,
        rng_seed: cfg.rng_seed,
    };
    let mut rows = Vec::new();
    for kind in ModelKind::ALL {
        let p = build_predictor(kind, &models.artifacts_for(kind), predictor_cfg)?;
        let e = evaluate_model(
            kind.name(),
            &p,
            decision_rule(kind, cfg.pipeline.highlight_threshold),
            corpus,
            &split.test,
            &cfg.pipeline,
            cfg.video_workers,
        )?;
        log::info!("{}: AP {:.2}% recall {:.2}%", kind, e.row.ap_percent, e.row.recall_percent);
        rows.push(e.row);
    }
    let gate = SceneClassifier::new(&models.scene)?;
    let scene_gate = scene_gate_metrics(&gate, corpus, &split.test, &cfg.pipeline)?;
    let eval_seconds = t1.elapsed().as_secs_f64();

    let report = BenchReport {
        rows,
        scene_gate,
        imbalance: imbalance(corpus, &split.train)?,
        train_frames: frames.images.len(),
        train_seconds,
        eval_seconds,
    };
    if let Some(dir) = out {
        models.save(&dir.join(MODELS_DIR))?;
        write_report(&report.rows, &dir.join(REPORT_CSV))?;
        let txt = report_notes(cfg) + &report_table(&report.rows);
        fs::write(dir.join(REPORT_TXT), txt).map_err(io_err(dir))?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(dir.join(BENCH_JSON), json + "\n").map_err(io_err(dir))?;
    }
    Ok(report)
}
