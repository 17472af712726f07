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

//! The template network: a small sequential CNN whose intermediate
//! activations are captured at tap points.

mod checkpoint;
mod spec;
mod train;

pub use checkpoint::{
    Fingerprint, NamedTensor, NetworkCheckpoint, TensorData, TrainingMetadata, FORMAT_VERSION, MAGIC,
};
pub use spec::{default_taps, Layer, LayerShape, Normalization, NetworkSpec};
pub use train::{evaluate_accuracy, init_params, train_template, EpochStats, TrainConfig, TrainReport};

use rayon::prelude::*;

use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which parts of a forward pass to record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pass {
    /// Frozen parameters, full network.
    Inference,
    /// Parameters recorded as trainable leaves, full network.
    Training,
    /// Frozen parameters, stopping after the last tap.
    TapsOnly,
}

/// Result of a recorded forward pass.
#[derive(Clone, Debug)]
pub struct TappedForward {
    pub logits: Option<Var>,
    /// `(tap name, N x C x H x W activation)` in spec order.
    pub taps: Vec<(String, Var)>,
    /// Parameter leaves in [`NetworkSpec::param_shapes`] order.
    pub params: Vec<Var>,
}

/// Values captured by [`Network::forward_with_taps`].
#[derive(Clone, Debug)]
pub struct TapValues<T> {
    pub logits: Option<Tensor<T>>,
    pub taps: Vec<(String, Tensor<T>)>,
}

/// A checkpoint materialized at working precision `T`.
#[derive(Clone, Debug)]
pub struct Network<T> {
    spec: NetworkSpec,
    fingerprint: Fingerprint,
    params: Vec<Tensor<T>>,
    norm_scale: Vec<T>,
    norm_shift: Vec<T>,
}

impl NetworkCheckpoint {
    pub fn network<T: Real>(&self) -> Network<T> {
        Network::from_parts(
            self.spec().clone(),
            self.fingerprint(),
            self.params().iter().map(|p| p.data.to_real()).collect(),
        )
    }
}

impl<T: Real> Network<T> {
    fn from_parts(spec: NetworkSpec, fingerprint: Fingerprint, params: Vec<Tensor<T>>) -> Self {
        let n = &spec.normalization;
        let norm_scale = n.std.iter().map(|&s| T::of(1.0 / s as f64)).collect();
        let norm_shift = n
            .mean
            .iter()
            .zip(&n.std)
            .map(|(&m, &s)| T::of(-(m as f64) / s as f64))
            .collect();
        Network {
            spec,
            fingerprint,
            params,
            norm_scale,
            norm_shift,
        }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn check_geometry(&self, shape: &[usize]) -> Result<()> {
        let g = self.spec.input;
        match *shape {
            [_, c, h, w] if (c, h, w) == (g.channels, g.height, g.width) => Ok(()),
            _ => Err(Error::Dimension {
                op: "network input (expected N x C x H x W)",
                expected: g.shape(shape.first().copied().unwrap_or(0)).to_vec(),
                got: shape.to_vec(),
            }),
        }
    }

    /// Records a forward pass over `images` (pixels in `[0, 1]`) on `tape`.
    pub fn forward(&self, tape: &mut Tape<T>, images: Var, pass: Pass) -> Result<TappedForward> {
        self.check_geometry(tape.value(images).shape())?;
        let trainable = pass == Pass::Training;
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone(), trainable)).collect();
        let last_tap = *self.spec.taps.last().expect("validated spec has taps");
        let mut x = tape.channel_affine(images, &self.norm_scale, &self.norm_shift)?;
        let mut taps = Vec::with_capacity(self.spec.taps.len());
        let mut next_tap = self.spec.taps.iter().peekable();
        let mut p = 0;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            x = match *layer {
                Layer::Conv { stride, padding, .. } => {
                    let y = tape.conv2d(x, params[p], Some(params[p + 1]), stride, padding)?;
                    p += 2;
                    y
                }
                Layer::Relu => tape.relu(x)?,
                Layer::Maxpool2 => tape.maxpool2(x)?,
                Layer::GlobalAvgpool => tape.global_avgpool(x)?,
                Layer::Dense { .. } => {
                    let y = tape.dense(x, params[p], Some(params[p + 1]))?;
                    p += 2;
                    y
                }
            };
            if next_tap.peek() == Some(&&i) {
                next_tap.next();
                taps.push((self.spec.tap_name(i), x));
            }
            if pass == Pass::TapsOnly && i == last_tap {
                return Ok(TappedForward {
                    logits: None,
                    taps,
                    params,
                });
            }
        }
        let logits = self.spec.has_head().then_some(x);
        Ok(TappedForward { logits, taps, params })
    }

    /// Runs the network on a batch and returns the logits and tapped
    /// activations as plain tensors.
    pub fn forward_with_taps(&self, images: &ImageBatch) -> Result<TapValues<T>> {
        let mut tape = Tape::new();
        let x = tape.constant(images.cast());
        let out = self.forward(&mut tape, x, Pass::Inference)?;
        Ok(TapValues {
            logits: out.logits.map(|v| tape.value(v).clone()),
            taps: out.taps.into_iter().map(|(n, v)| (n, tape.value(v).clone())).collect(),
        })
    }

    /// Argmax class per image, evaluated in chunks of `chunk` images.
    pub fn predict(&self, images: &ImageBatch, chunk: usize) -> Result<Vec<usize>> {
        if !self.spec.has_head() {
            return Err(Error::Contract("network has no classifier head".into()));
        }
        let chunk = chunk.max(1);
        let starts: Vec<usize> = (0..images.len()).step_by(chunk).collect();
        let parts: Vec<Result<Vec<usize>>> = starts
            .par_iter()
            .map(|&s| {
                let part = images.slice(s..(s + chunk).min(images.len()));
                let out = self.forward_with_taps(&part)?;
                let logits = out.logits.expect("head present");
                let g = logits.shape()[1];
                Ok(logits
                    .data()
                    .chunks(g)
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .fold((0, T::neg_infinity()), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                            .0
                    })
                    .collect())
            })
            .collect();
        let mut out = Vec::with_capacity(images.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}
