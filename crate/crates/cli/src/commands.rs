use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use highlight_core::annotation::{consensus, cronbach_alpha, select_best_k, AnnotationMatrix, MitlConfig};
use highlight_core::cascade::{build_predictor, Artifacts, ModelKind, PredictorConfig};
use highlight_core::corpus::{
    read_level_rows, read_scene_labels, synth_corpus, Corpus, CorpusSpec, Style, VideoPlan, GROUND_TRUTH_ID,
};
use highlight_core::eval::{
    decision_rule, evaluate_model, load_artifacts, load_training_frames, report_notes, report_table,
    run_benchmark_suite, train_models, write_report, BenchConfig, REPORT_CSV,
};
use highlight_core::nnet::{load_model, run_suite, TrainConfig};
use highlight_core::pipeline::{run_pipeline, FrameSource, SourceMode};
use highlight_core::postprocess::{segments_csv, SegmentPolicy, TimelineDocument};
use highlight_core::types::{HighlightLevel, PipelineConfig, SceneType};
use highlight_service::{RoundStatus, Store, StoreConfig};

use crate::{
    AggregateArgs, AlphaArgs, BenchArgs, Command, EvalArgs, GradcheckArgs, PredictArgs, RoundArgs, ServeArgs,
    StoreArgs, StreamArgs, SynthArgs, TrainArgs, TrainingArgs, WorkerArgs,
};

pub const TIMELINE_FILE: &str = "timeline.json";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const THROUGHPUT_FILE: &str = "throughput.json";
pub const CONSENSUS_FILE: &str = "consensus.csv";
pub const ALPHA_FILE: &str = "alpha.json";
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;
const DEFAULT_INPUT_SIZE: usize = 64;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Alpha(a) => alpha(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Round(a) => round(a),
        Command::Serve(a) => serve(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn workers(w: &WorkerArgs) -> Result<usize, Failure> {
    match w.workers {
        Some(0) => Err(usage("--workers must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get()).min(8)),
    }
}

fn model_kind(name: &str) -> Result<ModelKind, Failure> {
    ModelKind::parse(name).ok_or_else(|| {
        let known: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
        usage(format!("unknown model kind `{name}` (expected one of {})", known.join(", ")))
    })
}

fn train_config(t: &TrainingArgs, seed: u64) -> Result<TrainConfig, Failure> {
    if t.epochs == 0 || t.batch_size == 0 || t.train_stride == 0 || t.input_size == 0 {
        return Err(usage("--epochs, --batch-size, --train-stride and --input-size must be positive"));
    }
    Ok(TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        seed,
        ..TrainConfig::default()
    })
}

fn pipeline_config(s: &StreamArgs, input_size: usize, workers: usize) -> Result<PipelineConfig, Failure> {
    let cfg = PipelineConfig {
        stride: s.stride,
        highlight_threshold: s.threshold,
        input_size,
        workers,
        ..PipelineConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn make_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn input_size_of(artifacts: &Artifacts) -> usize {
    artifacts
        .scene
        .as_ref()
        .or(artifacts.head.as_ref())
        .map_or(DEFAULT_INPUT_SIZE, |m| m.spec.input.width)
}

fn synth(a: SynthArgs) -> Outcome {
    let style = Style::parse(&a.style).ok_or_else(|| usage(format!("unknown style `{}`", a.style)))?;
    if a.min_frames == 0 || a.min_frames > a.max_frames {
        return Err(usage("--min-frames must be positive and at most --max-frames"));
    }
    let spec = CorpusSpec {
        num_videos: a.videos,
        seed: a.seed,
        plan: VideoPlan {
            style,
            fps: a.fps,
            width: a.width,
            height: a.height,
            ..VideoPlan::default()
        },
        frames_range: (a.min_frames, a.max_frames),
    };
    let corpus = synth_corpus(&spec, &a.out, workers(&a.workers)?)?;
    let s = &corpus.index.split;
    println!(
        "wrote {} videos to {} (train {}, val {}, test {})",
        corpus.index.videos.len(),
        a.out.display(),
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Outcome {
    let cfg = train_config(&a.training, a.seed)?;
    let corpus = Corpus::open(&a.corpus)?;
    let t = &a.training;
    let frames = load_training_frames(&corpus, &corpus.index.split.train, t.train_stride, t.input_size)?;
    let models = train_models(&frames, t.input_size, &cfg)?;
    models.save(&a.out)?;
    println!(
        "trained 5 models on {} frames from {} videos; wrote {}",
        frames.images.len(),
        corpus.index.split.train.len(),
        a.out.display()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Outcome {
    let kind = model_kind(&a.model)?;
    let mut cfg = pipeline_config(&a.stream, DEFAULT_INPUT_SIZE, workers(&a.stream.workers)?)?;
    let artifacts = load_artifacts(&a.model_dir, kind)?;
    cfg.input_size = input_size_of(&artifacts);
    cfg.realtime_pacing = a.realtime;
    let predictor = build_predictor(
        kind,
        &artifacts,
        PredictorConfig {
            threshold: a.stream.threshold,
            rng_seed: a.stream.seed,
        },
    )?;
    let source = if a.video.as_os_str() == "-" {
        FrameSource::raw_stream(std::io::stdin(), "stdin")?
    } else {
        FrameSource::open(&a.video, SourceMode::ImageSequence)?
    };
    let run = run_pipeline(source, &predictor, &cfg)?;
    let policy = SegmentPolicy {
        threshold: a.stream.threshold,
        min_len_frames: a.min_segment,
        merge_gap_frames: a.merge_gap,
    };
    let doc = TimelineDocument::new(&run.timeline, cfg.stride, &policy);
    make_dir(&a.out)?;
    write(&a.out.join(TIMELINE_FILE), &doc.to_json())?;
    write(&a.out.join(SEGMENTS_FILE), &segments_csv(&doc.segments))?;
    let report = serde_json::to_string_pretty(&run.report)? + "\n";
    write(&a.out.join(THROUGHPUT_FILE), &report)?;
    let r = &run.report;
    println!(
        "{}: {} frames, {} classified, {} segments; {:.1} fps processed (need {:.1}, realtime {})",
        doc.video_id,
        doc.num_frames,
        r.frames_classified,
        doc.segments.len(),
        r.fps_processed,
        r.realtime_required_fps,
        if r.realtime_ok { "ok" } else { "NOT ok" }
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome {
    let kind = model_kind(&a.model)?;
    let video_workers = workers(&a.stream.workers)?;
    let corpus = Corpus::open(&a.corpus)?;
    let split = &corpus.index.split;
    let videos = match a.split.as_str() {
        "train" => split.train.clone(),
        "val" => split.val.clone(),
        "test" => split.test.clone(),
        "all" => corpus.index.videos.clone(),
        other => return Err(usage(format!("unknown split `{other}`"))),
    };
    let mut cfg = pipeline_config(&a.stream, DEFAULT_INPUT_SIZE, 1)?;
    let artifacts = load_artifacts(&a.model_dir, kind)?;
    cfg.input_size = input_size_of(&artifacts);
    let predictor = build_predictor(
        kind,
        &artifacts,
        PredictorConfig {
            threshold: a.stream.threshold,
            rng_seed: a.stream.seed,
        },
    )?;
    let rule = decision_rule(kind, a.stream.threshold);
    let e = evaluate_model(
        kind.name(),
        &predictor,
        rule,
        &corpus,
        &videos,
        &cfg,
        video_workers,
    )?;
    make_dir(&a.out)?;
    write_report(std::slice::from_ref(&e.row), &a.out.join(REPORT_CSV))?;
    print!("{}", report_table(std::slice::from_ref(&e.row)));
    Ok(())
}

fn bench(a: BenchArgs) -> Outcome {
    let n_workers = workers(&a.stream.workers)?;
    let train = train_config(&a.training, a.stream.seed)?;
    let pipeline = pipeline_config(&a.stream, a.training.input_size, 1)?;
    let corpus = match &a.corpus {
        Some(dir) => Corpus::open(dir)?,
        None => {
            let spec = CorpusSpec {
                num_videos: a.videos,
                seed: a.stream.seed,
                ..CorpusSpec::default()
            };
            synth_corpus(&spec, &a.out.join("corpus"), n_workers)?
        }
    };
    let cfg = BenchConfig {
        train,
        train_stride: a.training.train_stride,
        pipeline,
        rng_seed: a.stream.seed,
        video_workers: n_workers,
    };
    let report = run_benchmark_suite(&corpus, &cfg, Some(&a.out))?;
    print!("{}{}", report_notes(&cfg), report_table(&report.rows));
    let mut gate = String::new();
    for c in &report.scene_gate.per_class {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        let _ = write!(
            gate,
            " {}: AP {} recall {};",
            c.scene,
            pct(c.ap_percent),
            pct(c.recall_percent)
        );
    }
    println!(
        "scene gate ({} frames):{gate} {}",
        report.scene_gate.frames,
        if report.scene_gate.passes() { "pass" } else { "below 99%" }
    );
    let im = &report.imbalance;
    println!(
        "train imbalance: level counts {:?}, level 0 : level 3 = {:.1} : 1",
        im.level_counts,
        im.none_to_top_ratio()
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn crowd_cells(
    labels: &Path,
    scene_labels: Option<&Path>,
) -> anyhow::Result<BTreeMap<(String, usize), HighlightLevel>> {
    let rows = read_level_rows(labels)?;
    let scenes = scene_labels.map(read_scene_labels).transpose()?;
    let keep = |f: usize| {
        scenes
            .as_ref()
            .is_none_or(|s| s.get(f) == Some(&SceneType::GamePlay))
    };
    Ok(rows
        .into_iter()
        .filter(|r| r.annotator_id != GROUND_TRUTH_ID && keep(r.frame_index))
        .map(|r| ((r.annotator_id, r.frame_index), r.level))
        .collect())
}

fn alpha(a: AlphaArgs) -> Outcome {
    if a.k < 2 {
        return Err(usage("--k must be at least 2"));
    }
    let cells = crowd_cells(&a.labels, a.scene_labels.as_deref())?;
    let m = AnnotationMatrix::from_cells(&cells)?;
    let all: f64 = cronbach_alpha(&m)?;
    let best = select_best_k(&m, a.k)?;
    println!(
        "{}: {} annotators x {} frames, alpha {:.4}",
        a.video_id,
        m.num_annotators(),
        m.num_frames(),
        all
    );
    println!("best {}: {} alpha {:.4}", a.k, best.annotators.join(","), best.alpha);
    if let Some(dir) = &a.out {
        make_dir(dir)?;
        let doc = serde_json::json!({
            "video_id": a.video_id,
            "annotators": m.annotator_ids(),
            "frames": m.num_frames(),
            "alpha": all,
            "best_subset": best.annotators,
            "best_alpha": best.alpha,
        });
        write(&dir.join(ALPHA_FILE), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    Ok(())
}

fn aggregate(a: AggregateArgs) -> Outcome {
    let scenes = read_scene_labels(&a.scene_labels)?;
    let rows = read_level_rows(&a.labels)?;
    let c = consensus(&scenes, &rows);
    let mut csv = String::from("frame_index,score,label\n");
    for (i, (s, l)) in c.scores.iter().zip(&c.labels).enumerate() {
        let _ = writeln!(csv, "{i},{s:.6},{}", u8::from(*l));
    }
    make_dir(&a.out)?;
    write(&a.out.join(CONSENSUS_FILE), &csv)?;
    println!(
        "{} frames, {} highlights; source {}",
        c.scores.len(),
        c.positives(),
        serde_json::to_string(&c.source)?
    );
    Ok(())
}

fn open_store(s: &StoreArgs) -> Result<std::sync::Arc<Store>, Failure> {
    if s.round_stride == 0 || s.round_input_size == 0 || s.round_epochs == 0 {
        return Err(usage("--round-stride, --round-input-size and --round-epochs must be positive"));
    }
    let cfg = StoreConfig {
        mitl: MitlConfig {
            stride: s.round_stride,
            input_size: s.round_input_size,
            train: TrainConfig {
                epochs: s.round_epochs,
                seed: s.seed,
                ..TrainConfig::default()
            },
            workers: workers(&s.workers)?,
        },
        ..StoreConfig::default()
    };
    Ok(Store::open(&s.store, cfg)?)
}

fn round(a: RoundArgs) -> Outcome {
    let store = open_store(&a.store)?;
    if a.simulate {
        let fixed = store.correct_from_ground_truth()?;
        if !fixed.is_empty() {
            println!("corrected from ground truth: {}", fixed.join(", "));
        }
    }
    let r = store.run_round()?;
    match (r.status, &r.metrics) {
        (RoundStatus::Done, Some(m)) => {
            println!(
                "round {} done: effort {:.4}, scene val AP {}, model {}",
                r.round_id,
                m.correction_effort,
                m.scene_val_ap.map_or("-".into(), |v| format!("{v:.4}")),
                m.scene_model
            );
            if !m.next_batch.is_empty() {
                println!("next batch: {}", m.next_batch.join(", "));
            }
            Ok(())
        }
        _ => Err(anyhow!("round {} failed: {}", r.round_id, r.error.unwrap_or_default()).into()),
    }
}

fn serve(a: ServeArgs) -> Outcome {
    let store = open_store(&a.store)?;
    if let Some(p) = &a.highlight_model {
        store.register_highlight_head(&load_model(p)?)?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    println!("serving {} on {}", a.store.store.display(), a.addr);
    rt.block_on(highlight_service::serve(store, &a.addr))?;
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Outcome {
    if a.trials == 0 || a.input_size < 4 {
        return Err(usage("--trials must be positive and --input-size at least 4"));
    }
    let results = run_suite(a.trials, a.seed, a.input_size)?;
    let mut failed = Vec::new();
    for r in &results {
        println!(
            "{:<16} trials {:>4}  max rel error {:.3e}  skipped kinks {}",
            r.name, r.trials, r.max_rel_error, r.skipped_kinks
        );
        if !(r.max_rel_error < GRAD_CHECK_TOLERANCE) {
            failed.push(r.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("gradient check above {GRAD_CHECK_TOLERANCE:e}: {}", failed.join(", ")).into())
    }
}
