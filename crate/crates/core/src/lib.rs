//! Cascaded real-time highlight detection for esports-style video: a
//! scene-type gate in front of a highlight head, a bounded streaming
//! pipeline, crowd-label aggregation, machine-in-the-loop annotation rounds
//! and an evaluation harness.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`). Training
//! runs in `f64`; inference uses `f32` networks.

pub mod annotation;
pub mod cascade;
pub mod corpus;
pub mod eval;
pub mod keyed;
pub mod nnet;
pub mod pipeline;
pub mod postprocess;
pub mod scalar;
pub mod types;

pub use scalar::Scalar;

pub type Tensor32 = nnet::Tensor<f32>;
pub type Tensor64 = nnet::Tensor<f64>;
pub type Network32 = nnet::Network<f32>;
pub type Network64 = nnet::Network<f64>;
pub type Gradients32 = nnet::Gradients<f32>;
pub type Gradients64 = nnet::Gradients<f64>;
pub type Adam32 = nnet::Adam<f32>;
pub type Adam64 = nnet::Adam<f64>;
