//! The six predictor kinds behind one interface: random, single-model and
//! scene-gated cascade variants.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyed::{hash_str, unit_uniform};
use crate::nnet::{frames_to_batch, softmax, Head, Mode, ModelArtifact, Network, NnetError};
use crate::pipeline::{FramePrediction, FramePredictor};
use crate::types::{FrameImage, FrameRef, HighlightPrediction, SceneType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    SingleRandom,
    SingleBinary,
    SingleMulticlass,
    CascadeRandom,
    CascadeRegression,
    CascadeBinary,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::SingleRandom,
        ModelKind::SingleBinary,
        ModelKind::SingleMulticlass,
        ModelKind::CascadeRandom,
        ModelKind::CascadeRegression,
        ModelKind::CascadeBinary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SingleRandom => "single-random",
            ModelKind::SingleBinary => "single-binary",
            ModelKind::SingleMulticlass => "single-multiclass",
            ModelKind::CascadeRandom => "cascade-random",
            ModelKind::CascadeRegression => "cascade-regression",
            ModelKind::CascadeBinary => "cascade-binary",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_cascade(self) -> bool {
        matches!(
            self,
            ModelKind::CascadeRandom | ModelKind::CascadeRegression | ModelKind::CascadeBinary
        )
    }

    /// Head the kind needs, as (head type, output count).
    pub fn required_head(self) -> Option<(Head, usize)> {
        match self {
            ModelKind::SingleBinary | ModelKind::CascadeBinary => Some((Head::SoftmaxClassifier, 2)),
            ModelKind::SingleMulticlass => Some((Head::SoftmaxClassifier, 5)),
            ModelKind::CascadeRegression => Some((Head::ScalarRegressor, 1)),
            ModelKind::SingleRandom | ModelKind::CascadeRandom => None,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const SCENE_CLASSES: usize = 4;
/// Binary head: class 0 = non-highlight, class 1 = highlight.
pub const BINARY_HIGHLIGHT_CLASS: usize = 1;
/// Multiclass head: class 0 = highlight, classes 1..=4 = scene types in code order.
pub const MULTICLASS_HIGHLIGHT_CLASS: usize = 0;
pub const REGRESSION_MAX: f64 = 3.0;
/// Raw regression value a frame must exceed to count as a highlight.
pub const REGRESSION_CUTOFF: f64 = 1.0;

pub fn scene_labels() -> Vec<String> {
    SceneType::ALL.iter().map(|s| s.name().to_string()).collect()
}

pub fn binary_labels() -> Vec<String> {
    vec!["non_highlight".into(), "highlight".into()]
}

pub fn multiclass_labels() -> Vec<String> {
    std::iter::once("highlight".to_string())
        .chain(SceneType::ALL.iter().map(|s| s.name().to_string()))
        .collect()
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("{kind} needs a {role} model")]
    MissingArtifact { kind: ModelKind, role: &'static str },
    #[error("{role} model has {found} outputs ({found_head:?}), {kind} needs {expected} ({expected_head:?})")]
    ClassCountMismatch {
        kind: ModelKind,
        role: &'static str,
        expected: usize,
        expected_head: Head,
        found: usize,
        found_head: Head,
    },
    #[error(transparent)]
    Model(#[from] NnetError),
}

#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub scene: Option<ModelArtifact>,
    pub head: Option<ModelArtifact>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub threshold: f64,
    pub rng_seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePrediction {
    pub scene: SceneType,
    pub probs: [f64; 4],
}

/// Immutable once built; safe to share across threads.
#[derive(Debug, Clone)]
pub struct Predictor {
    kind: ModelKind,
    scene: Option<Network<f32>>,
    head: Option<Network<f32>>,
    config: PredictorConfig,
}

fn check(
    kind: ModelKind,
    role: &'static str,
    artifact: Option<&ModelArtifact>,
    head: Head,
    outputs: usize,
) -> Result<Network<f32>, CascadeError> {
    let a = artifact.ok_or(CascadeError::MissingArtifact { kind, role })?;
    if a.spec.head != head || a.num_classes() != outputs {
        return Err(CascadeError::ClassCountMismatch {
            kind,
            role,
            expected: outputs,
            expected_head: head,
            found: a.num_classes(),
            found_head: a.spec.head,
        });
    }
    Ok(a.network::<f32>()?)
}

pub fn build_predictor(
    kind: ModelKind,
    artifacts: &Artifacts,
    config: PredictorConfig,
) -> Result<Predictor, CascadeError> {
    let scene = if kind.is_cascade() {
        Some(check(
            kind,
            "scene",
            artifacts.scene.as_ref(),
            Head::SoftmaxClassifier,
            SCENE_CLASSES,
        )?)
    } else {
        None
    };
    let head = match kind.required_head() {
        Some((h, n)) => Some(check(kind, "highlight head", artifacts.head.as_ref(), h, n)?),
        None => None,
    };
    Ok(Predictor {
        kind,
        scene,
        head,
        config,
    })
}

fn run(net: &Network<f32>, image: &FrameImage) -> Result<Vec<f64>, NnetError> {
    let x = frames_to_batch::<f32>(&[image], net.spec().input.height);
    let out = net.forward(&x, Mode::Infer)?;
    Ok(out.data().iter().map(|&v| v as f64).collect())
}

fn probs(net: &Network<f32>, image: &FrameImage) -> Result<Vec<f64>, NnetError> {
    let logits = run(net, image)?;
    let t = crate::nnet::Tensor::from_vec(&[1, logits.len()], logits).expect("row");
    Ok(softmax(&t).into_data())
}

fn argmax(v: &[f64]) -> usize {
    // first maximum wins
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

const UNIFORM: [f64; 4] = [0.25; 4];

impl Predictor {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    /// Seeded score keyed by (seed, video, frame).
    pub fn random_score(&self, frame: &FrameRef) -> f64 {
        random_score(self.config.rng_seed, &frame.video_id, frame.frame_index)
    }

    pub fn predict_frame(
        &self,
        frame: &FrameRef,
        image: &FrameImage,
    ) -> Result<(ScenePrediction, HighlightPrediction), CascadeError> {
        Ok(self.predict_full(frame, image)?.split(frame.frame_index))
    }

    fn predict_full(&self, frame: &FrameRef, image: &FrameImage) -> Result<Full, CascadeError> {
        let threshold = self.config.threshold;
        let classify = |score: f64| score >= threshold;
        if let Some(scene_net) = &self.scene {
            let p = probs(scene_net, image)?;
            let probs4: [f64; 4] = p[..4].try_into().expect("4 scene classes");
            let scene = SceneType::ALL[argmax(&p)];
            if scene != SceneType::GamePlay {
                return Ok(Full {
                    scene,
                    probs: probs4,
                    score: 0.0,
                    is_highlight: false,
                    scene_evaluated: true,
                    head_evaluated: false,
                });
            }
            let (score, is_highlight) = match self.kind {
                ModelKind::CascadeRandom => {
                    let s = self.random_score(frame);
                    (s, classify(s))
                }
                ModelKind::CascadeBinary => {
                    let s = probs(self.head.as_ref().expect("built"), image)?[BINARY_HIGHLIGHT_CLASS];
                    (s, classify(s))
                }
                ModelKind::CascadeRegression => {
                    let v = run(self.head.as_ref().expect("built"), image)?[0].clamp(0.0, REGRESSION_MAX);
                    (v / REGRESSION_MAX, v > REGRESSION_CUTOFF)
                }
                _ => unreachable!("single kinds have no scene model"),
            };
            return Ok(Full {
                scene,
                probs: probs4,
                score,
                is_highlight,
                scene_evaluated: true,
                head_evaluated: true,
            });
        }
        match self.kind {
            ModelKind::SingleRandom => {
                let s = self.random_score(frame);
                Ok(Full {
                    scene: SceneType::Other,
                    probs: UNIFORM,
                    score: s,
                    is_highlight: classify(s),
                    scene_evaluated: false,
                    head_evaluated: true,
                })
            }
            ModelKind::SingleBinary => {
                let s = probs(self.head.as_ref().expect("built"), image)?[BINARY_HIGHLIGHT_CLASS];
                Ok(Full {
                    scene: SceneType::Other,
                    probs: UNIFORM,
                    score: s,
                    is_highlight: classify(s),
                    scene_evaluated: false,
                    head_evaluated: true,
                })
            }
            ModelKind::SingleMulticlass => {
                let p = probs(self.head.as_ref().expect("built"), image)?;
                let s = p[MULTICLASS_HIGHLIGHT_CLASS];
                let top = argmax(&p);
                let scene = if top == MULTICLASS_HIGHLIGHT_CLASS {
                    SceneType::GamePlay
                } else {
                    SceneType::ALL[top - 1]
                };
                // highlight mass folds into game play
                let probs4 = [p[0] + p[1], p[2], p[3], p[4]];
                Ok(Full {
                    scene,
                    probs: probs4,
                    score: s,
                    is_highlight: classify(s),
                    scene_evaluated: false,
                    head_evaluated: true,
                })
            }
            _ => unreachable!("cascade kinds carry a scene model"),
        }
    }
}

/// A scene model on its own: used for pre-annotation and gate metrics.
#[derive(Debug, Clone)]
pub struct SceneClassifier {
    net: Network<f32>,
}

impl SceneClassifier {
    pub fn new(artifact: &ModelArtifact) -> Result<Self, CascadeError> {
        let net = check(
            ModelKind::CascadeBinary,
            "scene",
            Some(artifact),
            Head::SoftmaxClassifier,
            SCENE_CLASSES,
        )?;
        Ok(Self { net })
    }

    pub fn classify(&self, image: &FrameImage) -> Result<ScenePrediction, CascadeError> {
        let p = probs(&self.net, image)?;
        Ok(ScenePrediction {
            scene: SceneType::ALL[argmax(&p)],
            probs: p[..4].try_into().expect("4 scene classes"),
        })
    }
}

impl FramePredictor for SceneClassifier {
    fn predict(&self, _: &FrameRef, image: &FrameImage) -> Result<FramePrediction, String> {
        let s = self.classify(image).map_err(|e| e.to_string())?;
        Ok(FramePrediction {
            scene: s.scene,
            scene_probs: s.probs,
            score: 0.0,
            is_highlight: false,
            scene_evaluated: true,
            head_evaluated: false,
        })
    }
}

pub fn random_score(seed: u64, video_id: &str, frame_index: usize) -> f64 {
    unit_uniform(&[seed, hash_str(video_id), frame_index as u64])
}

struct Full {
    scene: SceneType,
    probs: [f64; 4],
    score: f64,
    is_highlight: bool,
    scene_evaluated: bool,
    head_evaluated: bool,
}

impl Full {
    fn split(self, frame_index: usize) -> (ScenePrediction, HighlightPrediction) {
        (
            ScenePrediction {
                scene: self.scene,
                probs: self.probs,
            },
            HighlightPrediction {
                frame_index,
                score: self.score,
                is_highlight: self.is_highlight,
            },
        )
    }
}

impl FramePredictor for Predictor {
    fn predict(&self, frame: &FrameRef, image: &FrameImage) -> Result<FramePrediction, String> {
        let f = self.predict_full(frame, image).map_err(|e| e.to_string())?;
        Ok(FramePrediction {
            scene: f.scene,
            scene_probs: f.probs,
            score: f.score,
            is_highlight: f.is_highlight,
            scene_evaluated: f.scene_evaluated,
            head_evaluated: f.head_evaluated,
        })
    }
}

/// `(scene_evals, head_evals)` over the classified frames of a run.
pub fn evaluation_count(predictions: &[(usize, FramePrediction)]) -> (usize, usize) {
    let scene = predictions.iter().filter(|(_, p)| p.scene_evaluated).count();
    let head = predictions.iter().filter(|(_, p)| p.head_evaluated).count();
    (scene, head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{NetworkSpec, TrainConfig, TrainingMetadata};
    use crate::pipeline::{run_pipeline, FrameSource};
    use crate::types::PipelineConfig;

    fn meta() -> TrainingMetadata {
        TrainingMetadata {
            config: TrainConfig::default(),
            final_loss: 0.0,
            epoch_losses: vec![],
            data_fingerprint: String::new(),
            num_samples: 0,
        }
    }

    /// A network whose output ignores the input: zero final weights and the
    /// given final bias.
    fn constant_artifact(classes: usize, head: Head, bias: &[f32], labels: Vec<String>) -> ModelArtifact {
        let net = Network::<f32>::new(NetworkSpec::tinynet(classes, 8, head), 1).unwrap();
        let mut a = ModelArtifact::from_network(&net, labels, meta());
        for t in &mut a.tensors {
            if t.name == "fc1.weight" {
                t.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
            if t.name == "fc1.bias" {
                t.tensor.data_mut().copy_from_slice(bias);
            }
        }
        a
    }

    fn scene_always(scene: SceneType) -> ModelArtifact {
        let mut bias = [0.0f32; 4];
        bias[scene.code() as usize] = 20.0;
        constant_artifact(4, Head::SoftmaxClassifier, &bias, scene_labels())
    }

    fn binary_head(p_highlight: f64) -> ModelArtifact {
        let logit = (p_highlight / (1.0 - p_highlight)).ln() as f32;
        constant_artifact(2, Head::SoftmaxClassifier, &[0.0, logit], binary_labels())
    }

    fn frame() -> (FrameRef, FrameImage) {
        (FrameRef::new("v", 3, 30.0), FrameImage::filled(8, 8, [10, 20, 30]))
    }

    #[test]
    fn build_checks_artifacts() {
        let ok = Artifacts {
            scene: Some(scene_always(SceneType::GamePlay)),
            head: Some(binary_head(0.5)),
        };
        assert!(build_predictor(ModelKind::CascadeBinary, &ok, PredictorConfig::default()).is_ok());
        let no_scene = Artifacts {
            scene: None,
            head: Some(binary_head(0.5)),
        };
        assert!(matches!(
            build_predictor(ModelKind::CascadeBinary, &no_scene, PredictorConfig::default()),
            Err(CascadeError::MissingArtifact { role: "scene", .. })
        ));
        let four_class_head = Artifacts {
            scene: None,
            head: Some(scene_always(SceneType::Other)),
        };
        assert!(matches!(
            build_predictor(ModelKind::SingleMulticlass, &four_class_head, PredictorConfig::default()),
            Err(CascadeError::ClassCountMismatch { expected: 5, found: 4, .. })
        ));
        assert!(build_predictor(ModelKind::SingleRandom, &Artifacts::default(), PredictorConfig::default()).is_ok());
        assert!(matches!(
            build_predictor(ModelKind::CascadeRandom, &Artifacts::default(), PredictorConfig::default()),
            Err(CascadeError::MissingArtifact { .. })
        ));
    }

    #[test]
    fn gate_short_circuits_non_game_frames() {
        let a = Artifacts {
            scene: Some(scene_always(SceneType::Other)),
            head: Some(binary_head(0.9)),
        };
        let p = build_predictor(ModelKind::CascadeBinary, &a, PredictorConfig::default()).unwrap();
        let (f, img) = frame();
        let (s, h) = p.predict_frame(&f, &img).unwrap();
        assert_eq!(s.scene, SceneType::Other);
        assert_eq!((h.score, h.is_highlight), (0.0, false));
        let full = p.predict(&f, &img).unwrap();
        assert!(full.scene_evaluated && !full.head_evaluated);
    }

    #[test]
    fn binary_threshold_decision() {
        let a = Artifacts {
            scene: Some(scene_always(SceneType::GamePlay)),
            head: Some(binary_head(0.62)),
        };
        let p = build_predictor(ModelKind::CascadeBinary, &a, PredictorConfig::default()).unwrap();
        let (f, img) = frame();
        let (s, h) = p.predict_frame(&f, &img).unwrap();
        assert_eq!(s.scene, SceneType::GamePlay);
        assert!((h.score - 0.62).abs() < 1e-6);
        assert!(h.is_highlight);
    }

    #[test]
    fn regression_rule_is_strict() {
        for (v, expect) in [(0.9f32, false), (1.0, false), (1.2, true), (5.0, true)] {
            let head = constant_artifact(1, Head::ScalarRegressor, &[v], vec!["highlight_score".into()]);
            let a = Artifacts {
                scene: Some(scene_always(SceneType::GamePlay)),
                head: Some(head),
            };
            let p = build_predictor(ModelKind::CascadeRegression, &a, PredictorConfig::default()).unwrap();
            let (f, img) = frame();
            let (_, h) = p.predict_frame(&f, &img).unwrap();
            assert_eq!(h.is_highlight, expect, "v = {v}");
            let clamped = (v as f64).clamp(0.0, 3.0);
            assert!((h.score - clamped / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn random_kinds_are_keyed_and_reproducible() {
        let cfg = PredictorConfig {
            threshold: 0.5,
            rng_seed: 17,
        };
        let p = build_predictor(ModelKind::SingleRandom, &Artifacts::default(), cfg).unwrap();
        let img = FrameImage::filled(8, 8, [0; 3]);
        let a: Vec<f64> = (0..50)
            .map(|i| p.predict_frame(&FrameRef::new("v", i, 30.0), &img).unwrap().1.score)
            .collect();
        let b: Vec<f64> = (0..50)
            .rev()
            .map(|i| p.predict_frame(&FrameRef::new("v", i, 30.0), &img).unwrap().1.score)
            .rev()
            .collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| (0.0..1.0).contains(s)));
        let c = Artifacts {
            scene: Some(scene_always(SceneType::GamePlay)),
            head: None,
        };
        let cascade = build_predictor(ModelKind::CascadeRandom, &c, cfg).unwrap();
        assert_eq!(cascade.predict_frame(&FrameRef::new("v", 4, 30.0), &img).unwrap().1.score, a[4]);
    }

    #[test]
    fn single_and_cascade_agree_on_pure_game_play() {
        let head = binary_head(0.3);
        let cascade = build_predictor(
            ModelKind::CascadeBinary,
            &Artifacts {
                scene: Some(scene_always(SceneType::GamePlay)),
                head: Some(head.clone()),
            },
            PredictorConfig::default(),
        )
        .unwrap();
        let single = build_predictor(
            ModelKind::SingleBinary,
            &Artifacts {
                scene: None,
                head: Some(head),
            },
            PredictorConfig::default(),
        )
        .unwrap();
        let (f, img) = frame();
        assert_eq!(
            cascade.predict_frame(&f, &img).unwrap().1.score,
            single.predict_frame(&f, &img).unwrap().1.score
        );
    }

    #[test]
    fn multiclass_scene_and_score() {
        let head = constant_artifact(5, Head::SoftmaxClassifier, &[0.0, 0.0, 3.0, 0.0, 0.0], multiclass_labels());
        let p = build_predictor(
            ModelKind::SingleMulticlass,
            &Artifacts {
                scene: None,
                head: Some(head),
            },
            PredictorConfig::default(),
        )
        .unwrap();
        let (f, img) = frame();
        let (s, h) = p.predict_frame(&f, &img).unwrap();
        assert_eq!(s.scene, SceneType::GameReplay);
        let e3 = 3.0f64.exp();
        assert!((h.score - 1.0 / (4.0 + e3)).abs() < 1e-6);
    }

    #[test]
    fn evaluation_counts() {
        let frames: Vec<FrameImage> = (0..10).map(|_| FrameImage::filled(8, 8, [0; 3])).collect();
        let cfg = PipelineConfig {
            stride: 1,
            input_size: 8,
            ..PipelineConfig::default()
        };
        let gp = build_predictor(
            ModelKind::CascadeBinary,
            &Artifacts {
                scene: Some(scene_always(SceneType::Other)),
                head: Some(binary_head(0.5)),
            },
            PredictorConfig::default(),
        )
        .unwrap();
        let run = run_pipeline(FrameSource::in_memory("v", 30.0, frames.clone()), &gp, &cfg).unwrap();
        assert_eq!(evaluation_count(&run.predictions), (10, 0));
        let single = build_predictor(
            ModelKind::SingleBinary,
            &Artifacts {
                scene: None,
                head: Some(binary_head(0.5)),
            },
            PredictorConfig::default(),
        )
        .unwrap();
        let run = run_pipeline(FrameSource::in_memory("v", 30.0, frames), &single, &cfg).unwrap();
        assert_eq!(evaluation_count(&run.predictions), (0, 10));
    }
}
