use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Cache, Layer, Mode};
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use super::NnetError;
use crate::scalar::Scalar;

/// A network instance: spec plus parameter and running-statistic tensors.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetworkSpec,
    names: Vec<String>,
    pub(crate) layers: Vec<Layer<T>>,
}

/// Gradients of a scalar objective.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// One tensor per trainable parameter, in [`Network::params`] order.
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

/// Intermediate values kept by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub(crate) caches: Vec<Cache<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// ReLU masks and pooling argmax positions; equal patterns mean two
    /// forward passes took the same piecewise-linear branch.
    pub fn activation_pattern(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for c in &self.caches {
            match c {
                Cache::ReLU { mask } => out.extend(mask.iter().map(|&m| m as u32)),
                Cache::MaxPool { argmax, .. } => out.extend_from_slice(argmax),
                _ => {}
            }
        }
        out
    }
}

impl<T: Scalar> Network<T> {
    /// Fresh network with Glorot-uniform weights, zero biases, unit BN scale.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self, NnetError> {
        let shapes = spec.infer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, input)| Layer::init(l, input, &mut rng))
            .collect();
        Ok(Self {
            names: spec.layer_names(),
            spec,
            layers,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnetError> {
        let i = &self.spec.input;
        let want = [i.channels, i.height, i.width];
        if x.shape().len() != 4 || x.shape()[1..] != want || x.shape()[0] == 0 {
            let mut expected = vec![x.shape().first().copied().unwrap_or(1)];
            expected.extend_from_slice(&want);
            return Err(NnetError::ShapeMismatch {
                layer: self.names.first().cloned().unwrap_or_else(|| "input".into()),
                expected,
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Logits `[N, C]` (or `[N, 1]` for a regressor). In infer mode
    /// BatchNorm uses running statistics, so each row is independent of the
    /// rest of the batch.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnetError> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur, mode).0;
        }
        Ok(cur)
    }

    /// Train-mode forward that keeps what backward needs.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace<T>), NnetError> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(&cur, Mode::Train);
            caches.push(cache);
            cur = next;
        }
        Ok((cur, ForwardTrace { caches }))
    }

    pub fn backward(&self, trace: &ForwardTrace<T>, grad_out: &Tensor<T>) -> Gradients<T> {
        let mut per_layer: Vec<Vec<Tensor<T>>> = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter().zip(&trace.caches).rev() {
            let (gi, gp) = layer.backward(cache, &g);
            per_layer.push(gp);
            g = gi;
        }
        per_layer.reverse();
        Gradients {
            params: per_layer.into_iter().flatten().collect(),
            input: g,
        }
    }

    /// Updates BatchNorm running statistics from a train-mode pass.
    pub fn absorb_batch_stats(&mut self, trace: &ForwardTrace<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&trace.caches) {
            layer.absorb_batch_stats(cache);
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameters and BatchNorm state with stable names, in serialization
    /// order (per layer: parameters, then state).
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (layer, name) in self.layers.iter().zip(&self.names) {
            let labels: &[&str] = match layer {
                Layer::Conv { bias: Some(_), .. } | Layer::FullyConnected { bias: Some(_), .. } => {
                    &["weight", "bias"]
                }
                Layer::Conv { .. } | Layer::FullyConnected { .. } => &["weight"],
                Layer::BatchNorm { .. } => &["gamma", "beta", "running_mean", "running_var"],
                _ => &[],
            };
            let tensors = layer.params().into_iter().chain(layer.state());
            for (t, label) in tensors.zip(labels) {
                out.push((format!("{name}.{label}"), t));
            }
        }
        out
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            let is_bn = matches!(layer, Layer::BatchNorm { .. });
            if is_bn {
                // split borrow: params then state
                if let Layer::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    ..
                } = layer
                {
                    out.extend([gamma, beta, running_mean, running_var]);
                }
            } else {
                out.extend(layer.params_mut());
            }
        }
        out
    }

    /// Same network with every tensor converted to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut out = Network::<U>::new(self.spec.clone(), 0).expect("spec already validated");
        let src: Vec<&Tensor<T>> = self.named_tensors().into_iter().map(|(_, t)| t).collect();
        for (dst, s) in out.named_tensors_mut().into_iter().zip(src) {
            *dst = s.cast();
        }
        out
    }

    #[allow(dead_code)]
    pub(crate) fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.state_mut()).collect()
    }
}
