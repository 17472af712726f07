// Copyright 2026 The Impression Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Sequential network descriptions and shape inference.

use serde::{Deserialize, Serialize};

use crate::data::{Geometry, ImageBatch};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layer {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    Maxpool2,
    GlobalAvgpool,
    Dense {
        out_features: usize,
    },
}

impl Layer {
    pub fn conv3(out_channels: usize) -> Layer {
        Layer::Conv {
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::Relu => "relu",
            Layer::Maxpool2 => "maxpool2",
            Layer::GlobalAvgpool => "global_avgpool",
            Layer::Dense { .. } => "dense",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Conv { .. } | Layer::Dense { .. })
    }
}

/// Per-channel input standardization applied before the first layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Normalization {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Per-channel mean and standard deviation of `images`. Standard
    /// deviations are floored at `1e-3` so constant channels stay usable.
    pub fn fit(images: &ImageBatch) -> Self {
        let [n, c, h, w]: [usize; 4] = images.geometry().shape(images.len());
        let plane = h * w;
        let mut mean = Vec::with_capacity(c);
        let mut std = Vec::with_capacity(c);
        for ch in 0..c {
            let (mut s, mut ss) = (0.0f64, 0.0f64);
            for i in 0..n {
                let base = (i * c + ch) * plane;
                for &v in &images.data()[base..base + plane] {
                    s += v as f64;
                    ss += (v as f64) * (v as f64);
                }
            }
            let count = (n * plane).max(1) as f64;
            let m = s / count;
            mean.push(m as f32);
            std.push(((ss / count - m * m).max(0.0).sqrt()).max(1e-3) as f32);
        }
        Normalization { mean, std }
    }
}

/// Output of one layer for a single sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerShape {
    Spatial { channels: usize, height: usize, width: usize },
    Flat(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input: Geometry,
    pub classes: usize,
    pub normalization: Normalization,
    pub layers: Vec<Layer>,
    /// Indices of layers whose outputs are captured, strictly increasing.
    pub taps: Vec<usize>,
}

impl NetworkSpec {
    /// Three conv blocks (16, 32, 64 channels) with 2x2 pooling between them,
    /// global average pooling and a linear classifier. Every post-ReLU conv
    /// output is tapped.
    pub fn small(input: Geometry, classes: usize) -> Self {
        let layers = vec![
            Layer::conv3(16),
            Layer::Relu,
            Layer::Maxpool2,
            Layer::conv3(32),
            Layer::Relu,
            Layer::Maxpool2,
            Layer::conv3(64),
            Layer::Relu,
            Layer::GlobalAvgpool,
            Layer::Dense {
                out_features: classes,
            },
        ];
        let taps = default_taps(&layers);
        NetworkSpec {
            input,
            classes,
            normalization: Normalization::identity(input.channels),
            layers,
            taps,
        }
    }

    /// Output shape of every layer, validating the layer sequence.
    pub fn layer_shapes(&self) -> Result<Vec<LayerShape>> {
        let mut cur = LayerShape::Spatial {
            channels: self.input.channels,
            height: self.input.height,
            width: self.input.width,
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: &str| Error::Config(format!("layer {i} ({}): {msg}", layer.kind()));
            cur = match (layer, cur) {
                (
                    &Layer::Conv {
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    },
                    LayerShape::Spatial { height, width, .. },
                ) => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(bad("out_channels, kernel and stride must be >= 1"));
                    }
                    if kernel > height + 2 * padding || kernel > width + 2 * padding {
                        return Err(bad("kernel larger than padded input"));
                    }
                    LayerShape::Spatial {
                        channels: out_channels,
                        height: (height + 2 * padding - kernel) / stride + 1,
                        width: (width + 2 * padding - kernel) / stride + 1,
                    }
                }
                (Layer::Relu, s) => s,
                (
                    Layer::Maxpool2,
                    LayerShape::Spatial {
                        channels,
                        height,
                        width,
                    },
                ) => {
                    if height < 2 || width < 2 {
                        return Err(bad("input smaller than the 2x2 window"));
                    }
                    LayerShape::Spatial {
                        channels,
                        height: height / 2,
                        width: width / 2,
                    }
                }
                (Layer::GlobalAvgpool, LayerShape::Spatial { channels, .. }) => LayerShape::Flat(channels),
                (&Layer::Dense { out_features }, LayerShape::Flat(_)) => {
                    if out_features == 0 {
                        return Err(bad("out_features must be >= 1"));
                    }
                    LayerShape::Flat(out_features)
                }
                (_, LayerShape::Flat(_)) => return Err(bad("needs a spatial input")),
                (Layer::Dense { .. }, LayerShape::Spatial { .. }) => {
                    return Err(bad("needs a flat input; add global_avgpool first"))
                }
            };
            out.push(cur);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.input;
        if g.channels == 0 || g.height == 0 || g.width == 0 {
            return Err(Error::Config(format!("input geometry {g} has an empty dimension")));
        }
        let n = &self.normalization;
        if n.mean.len() != g.channels || n.std.len() != g.channels {
            return Err(Error::Config("normalization needs one mean and std per input channel".into()));
        }
        if n.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || n.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("normalization std must be positive and finite".into()));
        }
        let shapes = self.layer_shapes()?;
        if self.taps.is_empty() {
            return Err(Error::Config("at least one tap point is required".into()));
        }
        if self.taps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("tap list {:?} is not strictly increasing", self.taps)));
        }
        for &t in &self.taps {
            match shapes.get(t) {
                Some(LayerShape::Spatial { .. }) => {}
                Some(LayerShape::Flat(_)) => {
                    return Err(Error::Config(format!("tap {t} refers to a non-spatial layer output")))
                }
                None => return Err(Error::Config(format!("tap {t} refers to a missing layer"))),
            }
        }
        if let Some(LayerShape::Flat(f)) = shapes.last() {
            if *f != self.classes {
                return Err(Error::Config(format!(
                    "classifier emits {f} outputs but the spec declares {} classes",
                    self.classes
                )));
            }
        }
        Ok(())
    }

    /// Whether the network ends in a classifier producing logits.
    pub fn has_head(&self) -> bool {
        matches!(self.layer_shapes().ok().and_then(|s| s.last().copied()), Some(LayerShape::Flat(_)))
    }

    pub fn tap_name(&self, layer: usize) -> String {
        format!("layer{layer}.{}", self.layers[layer].kind())
    }

    pub fn tap_names(&self) -> Vec<String> {
        self.taps.iter().map(|&t| self.tap_name(t)).collect()
    }

    /// `(channels, height, width)` of every tap for one sample.
    pub fn tap_shapes(&self) -> Result<Vec<Geometry>> {
        let shapes = self.layer_shapes()?;
        self.taps
            .iter()
            .map(|&t| match shapes.get(t) {
                Some(&LayerShape::Spatial {
                    channels,
                    height,
                    width,
                }) => Ok(Geometry::new(channels, height, width)),
                _ => Err(Error::Config(format!("tap {t} is not a spatial layer"))),
            })
            .collect()
    }

    /// Total tapped channel count.
    pub fn tapped_channels(&self) -> Result<usize> {
        Ok(self.tap_shapes()?.iter().map(|g| g.channels).sum())
    }

    /// Parameter tensor names and shapes in layer order.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let shapes = self.layer_shapes()?;
        let mut prev_channels = self.input.channels;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    ..
                } => {
                    out.push((format!("layer{i}.weight"), vec![out_channels, prev_channels, kernel, kernel]));
                    out.push((format!("layer{i}.bias"), vec![out_channels]));
                }
                Layer::Dense { out_features } => {
                    out.push((format!("layer{i}.weight"), vec![out_features, prev_channels]));
                    out.push((format!("layer{i}.bias"), vec![out_features]));
                }
                _ => {}
            }
            prev_channels = match shapes[i] {
                LayerShape::Spatial { channels, .. } => channels,
                LayerShape::Flat(f) => f,
            };
        }
        Ok(out)
    }
}

/// Post-activation outputs of every conv block: each ReLU that directly
/// follows a convolution.
pub fn default_taps(layers: &[Layer]) -> Vec<usize> {
    layers
        .windows(2)
        .enumerate()
        .filter(|(_, w)| matches!(w, [Layer::Conv { .. }, Layer::Relu]))
        .map(|(i, _)| i + 1)
        .collect()
}
