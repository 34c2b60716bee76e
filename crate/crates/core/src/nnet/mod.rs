//! From-scratch convolutional classifier: layers, Adam training, gradient
//! verification and model files.

mod adam;
mod artifact;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod spec;
mod tensor;
mod train;

use thiserror::Error;

pub use adam::{Adam, AdamParams};
pub use artifact::{load_model, save_model, ModelArtifact, NamedTensor, TrainingMetadata, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use gradcheck::{
    grad_check, grad_check_with, randomized_instance, relative_error, run_suite, standard_cases, CheckCase,
    GradCheckConfig, GradCheckReport, Objective, SuiteResult,
};
pub use layers::Mode;
pub use loss::{cross_entropy, euclidean, softmax, softmax_in_place};
pub use network::{ForwardTrace, Gradients, Network};
pub use spec::{Head, InputShape, LayerSpec, NetworkSpec};
pub use tensor::Tensor;
pub use train::{inverse_frequency_weights, train, train_network, Dataset, Targets, TrainConfig};

use crate::scalar::Scalar;
use crate::types::FrameImage;

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("shape mismatch at {layer}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        layer: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} at sample {index} out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("target kind does not match the network head")]
    TargetKindMismatch,
    #[error("loss became non-finite in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("malformed model header: {0}")]
    Header(String),
    #[error("model format version {found} not supported (expected {supported})")]
    FormatVersionMismatch { found: u32, supported: u32 },
    #[error("weight shape mismatch: {0}")]
    WeightShapeMismatch(String),
}

/// Packs frames into a `[N, 3, size, size]` batch: nearest-neighbour resize,
/// channel-planar layout, values scaled to `[0, 1]`.
pub fn frames_to_batch<T: Scalar>(frames: &[&FrameImage], size: usize) -> Tensor<T> {
    let plane = size * size;
    let mut data = vec![T::zero(); frames.len() * 3 * plane];
    let scale = T::lit(1.0 / 255.0);
    for (n, frame) in frames.iter().enumerate() {
        let resized;
        let img = if frame.width() == size && frame.height() == size {
            *frame
        } else {
            resized = frame.resize_nearest(size);
            &resized
        };
        let dst = &mut data[n * 3 * plane..(n + 1) * 3 * plane];
        for (p, rgb) in img.pixels().chunks_exact(3).enumerate() {
            for c in 0..3 {
                dst[c * plane + p] = T::from_u8(rgb[c]).unwrap() * scale;
            }
        }
    }
    Tensor::from_vec(&[frames.len(), 3, size, size], data).expect("batch shape")
}
