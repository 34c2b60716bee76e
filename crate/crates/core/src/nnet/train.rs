//! Mini-batch Adam training for classifier and regressor heads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::{Adam, AdamParams};
use super::artifact::{ModelArtifact, TrainingMetadata};
use super::loss::{cross_entropy, euclidean};
use super::network::Network;
use super::spec::{Head, NetworkSpec};
use super::{frames_to_batch, NnetError};
use crate::types::FrameImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub class_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 10,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            class_weights: None,
        }
    }
}

impl TrainConfig {
    /// Original recipe: mini-batches of 128 frames for 100 epochs.
    pub fn full_scale(seed: u64) -> Self {
        Self {
            batch_size: 128,
            epochs: 100,
            seed,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), NnetError> {
        let ok = self.batch_size >= 1
            && self.epochs >= 1
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.adam_beta1)
            && self.adam_beta1 > 0.0
            && (0.0..1.0).contains(&self.adam_beta2)
            && self.adam_beta2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnetError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Scalars(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Scalars(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Frames with their training targets. Frames are rescaled to the network
/// input size when batches are assembled.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<FrameImage>,
    pub targets: Targets,
    /// Class index → name (a single name for regressors).
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// SHA-256 over pixels and targets, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for img in &self.images {
            h.update((img.width() as u64).to_le_bytes());
            h.update((img.height() as u64).to_le_bytes());
            h.update(img.pixels());
        }
        match &self.targets {
            Targets::Classes(v) => v.iter().for_each(|&c| h.update((c as u64).to_le_bytes())),
            Targets::Scalars(v) => v.iter().for_each(|&s| h.update(s.to_le_bytes())),
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `w_c = N / (C · count_c)`, with absent classes weighted 0.
pub fn inverse_frequency_weights(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                labels.len() as f64 / (num_classes as f64 * c as f64)
            }
        })
        .collect()
}

/// Trains a fresh network described by `spec`. Deterministic for a fixed
/// config seed.
pub fn train(spec: &NetworkSpec, data: &Dataset, config: &TrainConfig) -> Result<ModelArtifact, NnetError> {
    train_network(spec, data, config).map(|(_, artifact)| artifact)
}

pub fn train_network(
    spec: &NetworkSpec,
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(Network<f64>, ModelArtifact), NnetError> {
    config.validate()?;
    if data.is_empty() || data.targets.is_empty() {
        return Err(NnetError::EmptyDataset);
    }
    if data.targets.len() != data.images.len() {
        return Err(NnetError::InvalidConfig(format!(
            "{} images but {} targets",
            data.images.len(),
            data.targets.len()
        )));
    }
    match (&data.targets, spec.head) {
        (Targets::Classes(labels), Head::SoftmaxClassifier) => {
            if let Some((index, &label)) = labels
                .iter()
                .enumerate()
                .find(|(_, &l)| l >= spec.num_classes)
            {
                return Err(NnetError::LabelOutOfRange {
                    index,
                    label,
                    classes: spec.num_classes,
                });
            }
        }
        (Targets::Scalars(_), Head::ScalarRegressor) => {}
        _ => return Err(NnetError::TargetKindMismatch),
    }

    let mut net = Network::<f64>::new(spec.clone(), config.seed)?;
    let mut opt = Adam::new(
        AdamParams {
            learning_rate: config.learning_rate,
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            epsilon: config.adam_epsilon,
        },
        &net.params(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let size = spec.input.height;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let images: Vec<&FrameImage> = batch.iter().map(|&i| &data.images[i]).collect();
            let x = frames_to_batch::<f64>(&images, size);
            let (out, trace) = net.forward_train(&x)?;
            let (loss, grad) = match &data.targets {
                Targets::Classes(labels) => {
                    let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                    cross_entropy(&out, &y, config.class_weights.as_deref())
                }
                Targets::Scalars(targets) => {
                    let t: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
                    euclidean(&out, &t)
                }
            };
            if !loss.is_finite() {
                return Err(NnetError::DivergedLoss { epoch: epoch + 1 });
            }
            loss_sum += loss * batch.len() as f64;
            let grads = net.backward(&trace, &grad);
            net.absorb_batch_stats(&trace);
            opt.update(net.params_mut(), &grads.params);
        }
        let epoch_loss = loss_sum / data.len() as f64;
        if !epoch_loss.is_finite() || !net.params().iter().all(|p| p.is_finite()) {
            return Err(NnetError::DivergedLoss { epoch: epoch + 1 });
        }
        log::debug!("{} epoch {}: loss {:.6}", spec.name, epoch + 1, epoch_loss);
        epoch_losses.push(epoch_loss);
    }

    let metadata = TrainingMetadata {
        config: config.clone(),
        final_loss: *epoch_losses.last().expect("epochs >= 1"),
        epoch_losses,
        data_fingerprint: data.fingerprint(),
        num_samples: data.len(),
    };
    let artifact = ModelArtifact::from_network(&net, data.class_names.clone(), metadata);
    Ok((net, artifact))
}
