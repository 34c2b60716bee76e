//! Architecture descriptions and per-sample shape inference.

use serde::{Deserialize, Serialize};

use super::NnetError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        #[serde(default = "default_bias")]
        bias: bool,
    },
    BatchNorm {
        channels: usize,
        epsilon: f64,
        momentum: f64,
    },
    #[serde(rename = "relu")]
    ReLU,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    FullyConnected {
        out_features: usize,
        #[serde(default = "default_bias")]
        bias: bool,
    },
    Flatten,
}

fn default_bias() -> bool {
    true
}

impl LayerSpec {
    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            epsilon: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn conv(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            pad,
            bias: true,
        }
    }

    pub fn fc(out_features: usize) -> Self {
        LayerSpec::FullyConnected {
            out_features,
            bias: true,
        }
    }

    /// Same layer without an additive bias (redundant ahead of BatchNorm,
    /// whose shift absorbs it).
    pub fn without_bias(self) -> Self {
        match self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
                ..
            } => LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
                bias: false,
            },
            LayerSpec::FullyConnected { out_features, .. } => LayerSpec::FullyConnected {
                out_features,
                bias: false,
            },
            other => other,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::BatchNorm { .. } => "bn",
            LayerSpec::ReLU => "relu",
            LayerSpec::MaxPool { .. } => "pool",
            LayerSpec::FullyConnected { .. } => "fc",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Output shape for one sample with input shape `input`.
    pub fn output_shape(&self, input: &[usize], name: &str) -> Result<Vec<usize>, NnetError> {
        let mismatch = |expected: Vec<usize>| NnetError::ShapeMismatch {
            layer: name.to_string(),
            expected,
            actual: input.to_vec(),
        };
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
                ..
            } => {
                let [_, h, w] = input else {
                    return Err(mismatch(vec![0, 0, 0]));
                };
                if h + 2 * pad < kernel || w + 2 * pad < kernel || stride == 0 || kernel == 0 {
                    return Err(mismatch(vec![input[0], kernel, kernel]));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * pad - kernel) / stride + 1,
                    (w + 2 * pad - kernel) / stride + 1,
                ])
            }
            LayerSpec::BatchNorm { channels, .. } => {
                if input.first() != Some(&channels) {
                    let mut e = input.to_vec();
                    if !e.is_empty() {
                        e[0] = channels;
                    }
                    return Err(mismatch(e));
                }
                Ok(input.to_vec())
            }
            LayerSpec::ReLU => Ok(input.to_vec()),
            LayerSpec::MaxPool { kernel, stride } => {
                let [c, h, w] = input else {
                    return Err(mismatch(vec![0, 0, 0]));
                };
                if *h < kernel || *w < kernel || stride == 0 || kernel == 0 {
                    return Err(mismatch(vec![*c, kernel, kernel]));
                }
                Ok(vec![*c, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
            }
            LayerSpec::FullyConnected { out_features, .. } => {
                if input.len() != 1 {
                    return Err(mismatch(vec![input.iter().product()]));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    SoftmaxClassifier,
    ScalarRegressor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    pub head: Head,
}

impl NetworkSpec {
    /// Desk-scale reference CNN: two conv/BN/ReLU/pool blocks and a linear
    /// output layer. `num_classes` is ignored for the regressor head.
    pub fn tinynet(num_classes: usize, input_size: usize, head: Head) -> Self {
        let outputs = match head {
            Head::SoftmaxClassifier => num_classes,
            Head::ScalarRegressor => 1,
        };
        NetworkSpec {
            name: "tinynet-bn-after-conv".into(),
            input: InputShape {
                channels: 3,
                height: input_size,
                width: input_size,
            },
            layers: vec![
                LayerSpec::conv(8, 3, 1, 1).without_bias(),
                LayerSpec::batch_norm(8),
                LayerSpec::ReLU,
                LayerSpec::MaxPool { kernel: 2, stride: 2 },
                LayerSpec::conv(16, 3, 1, 1).without_bias(),
                LayerSpec::batch_norm(16),
                LayerSpec::ReLU,
                LayerSpec::MaxPool { kernel: 2, stride: 2 },
                LayerSpec::Flatten,
                LayerSpec::fc(outputs),
            ],
            num_classes: outputs,
            head,
        }
    }

    /// AlexNet with batch normalisation after every conv and every hidden
    /// fully-connected layer, on 3×227×227 input. Described for reference;
    /// far too large to train on the desk-scale path.
    pub fn alexnet_bn(num_classes: usize) -> Self {
        use LayerSpec as L;
        let bn = L::batch_norm;
        NetworkSpec {
            name: "alexnet-bn-after-conv-and-hidden-fc".into(),
            input: InputShape {
                channels: 3,
                height: 227,
                width: 227,
            },
            layers: vec![
                L::conv(96, 11, 4, 0).without_bias(),
                bn(96),
                L::ReLU,
                L::MaxPool { kernel: 3, stride: 2 },
                L::conv(256, 5, 1, 2).without_bias(),
                bn(256),
                L::ReLU,
                L::MaxPool { kernel: 3, stride: 2 },
                L::conv(384, 3, 1, 1).without_bias(),
                bn(384),
                L::ReLU,
                L::conv(384, 3, 1, 1).without_bias(),
                bn(384),
                L::ReLU,
                L::conv(256, 3, 1, 1).without_bias(),
                bn(256),
                L::ReLU,
                L::MaxPool { kernel: 3, stride: 2 },
                L::Flatten,
                L::fc(4096).without_bias(),
                bn(4096),
                L::ReLU,
                L::fc(4096).without_bias(),
                bn(4096),
                L::ReLU,
                L::fc(num_classes),
            ],
            num_classes,
            head: Head::SoftmaxClassifier,
        }
    }

    /// Stable per-layer names (`conv1`, `bn2`, `fc1`, ...).
    pub fn layer_names(&self) -> Vec<String> {
        let mut counts = std::collections::HashMap::new();
        self.layers
            .iter()
            .map(|l| {
                let c = counts.entry(l.kind()).or_insert(0usize);
                *c += 1;
                format!("{}{}", l.kind(), c)
            })
            .collect()
    }

    /// Per-sample shapes: entry 0 is the input, entry `i + 1` the output of
    /// layer `i`.
    pub fn infer_shapes(&self) -> Result<Vec<Vec<usize>>, NnetError> {
        let mut shapes = vec![vec![self.input.channels, self.input.height, self.input.width]];
        for (layer, name) in self.layers.iter().zip(self.layer_names()) {
            let next = layer.output_shape(shapes.last().unwrap(), &name)?;
            shapes.push(next);
        }
        let expected = match self.head {
            Head::SoftmaxClassifier => self.num_classes,
            Head::ScalarRegressor => 1,
        };
        let last = shapes.last().unwrap();
        if last.as_slice() != [expected] {
            return Err(NnetError::ShapeMismatch {
                layer: "output".into(),
                expected: vec![expected],
                actual: last.clone(),
            });
        }
        Ok(shapes)
    }

    pub fn num_outputs(&self) -> usize {
        match self.head {
            Head::SoftmaxClassifier => self.num_classes,
            Head::ScalarRegressor => 1,
        }
    }
}
