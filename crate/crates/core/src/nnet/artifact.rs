//! Trained-model container and its binary file format.
//!
//! Layout: the 8-byte magic `NNMODEL1`, a little-endian `u32` header length,
//! a UTF-8 JSON header (spec, label map, metadata, tensor manifest), then
//! every tensor as little-endian `f32` in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Network;
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use super::train::TrainConfig;
use super::NnetError;
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 8] = b"NNMODEL1";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: TrainConfig,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
    pub data_fingerprint: String,
    pub num_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub spec: NetworkSpec,
    pub labels: Vec<String>,
    pub tensors: Vec<NamedTensor>,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: NetworkSpec,
    labels: Vec<String>,
    metadata: TrainingMetadata,
    tensors: Vec<TensorEntry>,
}

impl ModelArtifact {
    /// Snapshot of `net`, quantised to `f32`.
    pub fn from_network<T: Scalar>(net: &Network<T>, labels: Vec<String>, metadata: TrainingMetadata) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            spec: net.spec().clone(),
            labels,
            tensors: net
                .named_tensors()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    tensor: t.cast(),
                })
                .collect(),
            metadata,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_outputs()
    }

    /// Rebuilds the network in scalar type `T`, checking every tensor shape
    /// against the spec.
    pub fn network<T: Scalar>(&self) -> Result<Network<T>, NnetError> {
        let mut net = Network::<T>::new(self.spec.clone(), 0)?;
        let expected: Vec<(String, Vec<usize>)> = net
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(NnetError::WeightShapeMismatch(format!(
                "spec has {} tensors, artifact has {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), got) in expected.iter().zip(&self.tensors) {
            if *name != got.name || shape.as_slice() != got.tensor.shape() {
                return Err(NnetError::WeightShapeMismatch(format!(
                    "expected {name} {shape:?}, found {} {:?}",
                    got.name,
                    got.tensor.shape()
                )));
            }
        }
        for (dst, src) in net.named_tensors_mut().into_iter().zip(&self.tensors) {
            *dst = src.tensor.cast();
        }
        Ok(net)
    }
}

pub fn save_model(artifact: &ModelArtifact, path: impl AsRef<Path>) -> Result<(), NnetError> {
    let header = Header {
        format_version: artifact.format_version,
        spec: artifact.spec.clone(),
        labels: artifact.labels.clone(),
        metadata: artifact.metadata.clone(),
        tensors: artifact
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.tensor.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| NnetError::Header(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for t in &artifact.tensors {
        for v in t.tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact, NnetError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(NnetError::BadMagic);
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| NnetError::Header(e.to_string()))?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(NnetError::FormatVersionMismatch {
            found: header.format_version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push(NamedTensor {
            name: entry.name,
            tensor: Tensor::from_vec(&entry.shape, data)
                .map_err(|_| NnetError::WeightShapeMismatch("empty tensor".into()))?,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(NnetError::WeightShapeMismatch(format!(
            "{} trailing bytes after the last tensor",
            rest.len()
        )));
    }
    let artifact = ModelArtifact {
        format_version: header.format_version,
        spec: header.spec,
        labels: header.labels,
        tensors,
        metadata: header.metadata,
    };
    // validates every tensor shape against the spec
    artifact.network::<f32>()?;
    Ok(artifact)
}
