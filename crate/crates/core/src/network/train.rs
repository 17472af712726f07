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

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::checkpoint::{NamedTensor, NetworkCheckpoint, TensorData, TrainingMetadata};
use super::spec::{NetworkSpec, Normalization};
use super::{Network, Pass};
use crate::adam::{Adam, AdamConfig};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Replace the spec's input normalization with the training set's
    /// per-channel mean and standard deviation.
    #[serde(default = "yes")]
    pub fit_normalization: bool,
}

fn yes() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            batch_size: 32,
            learning_rate: 2e-3,
            seed: 0,
            fit_normalization: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Accuracy on the mini-batches seen during the epoch.
    pub running_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// He-normal convolution and dense weights, zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<Vec<NamedTensor>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.param_shapes()?
        .into_iter()
        .map(|(name, shape)| {
            let data = if name.ends_with(".weight") {
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("finite std");
                Tensor::from_fn(shape, |_| normal.sample(&mut rng))
            } else {
                Tensor::zeros(shape)
            };
            Ok(NamedTensor {
                name,
                data: TensorData::F32(data),
            })
        })
        .collect()
}

pub fn evaluate_accuracy(net: &Network<f32>, set: &LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Degenerate("accuracy over an empty dataset".into()));
    }
    let pred = net.predict(&set.images, 256)?;
    let hits = pred.iter().zip(&set.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / set.len() as f64)
}

/// Trains a classifier for `spec` with Adam and softmax cross-entropy.
/// Fully determined by `cfg.seed` and the data order.
pub fn train_template(
    spec: &NetworkSpec,
    train: &LabeledSet,
    test: Option<&LabeledSet>,
    cfg: &TrainConfig,
) -> Result<(NetworkCheckpoint, TrainReport)> {
    spec.validate()?;
    if !spec.has_head() {
        return Err(Error::Config("training needs a spec ending in a dense classifier".into()));
    }
    if train.is_empty() {
        return Err(Error::Degenerate("training set is empty".into()));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be >= 1".into()));
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= spec.classes) {
        return Err(Error::Config(format!("label {bad} out of range for {} classes", spec.classes)));
    }
    let shape = train.images.tensor().shape().to_vec();
    if train.images.geometry() != spec.input {
        return Err(Error::dim("train_template", &spec.input.shape(train.len()), &shape));
    }
    let mut spec = spec.clone();
    if cfg.fit_normalization {
        spec.normalization = Normalization::fit(&train.images);
    }
    let spec = &spec;
    let init = NetworkCheckpoint::new(spec.clone(), None, init_params(spec, cfg.seed)?)?;
    let mut net: Network<f32> = init.network();
    net.check_geometry(&shape)?;

    let sizes: Vec<usize> = net.params().iter().map(|p| p.numel()).collect();
    let mut opt = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        &sizes,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits, mut steps) = (0.0f64, 0usize, 0usize);
        for (step, idx) in order.chunks(cfg.batch_size).enumerate() {
            let images = train.images.select(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let mut tape = Tape::<f32>::new();
            let x = tape.constant(images.cast());
            let diverged = |_| Error::Training { epoch, step };
            let fwd = net.forward(&mut tape, x, Pass::Training).map_err(diverged)?;
            let logits = fwd.logits.expect("head present");
            let loss = tape.cross_entropy(logits, &labels).map_err(diverged)?;
            let loss_value = tape.value(loss).data()[0] as f64;
            if !loss_value.is_finite() {
                return Err(Error::Training { epoch, step });
            }
            tape.backward(loss)?;
            let g = tape.value(logits).shape()[1];
            hits += tape
                .value(logits)
                .data()
                .chunks(g)
                .zip(&labels)
                .filter(|(row, &l)| {
                    row.iter().enumerate().all(|(j, &v)| j == l || v < row[l])
                })
                .count();
            let grads: Vec<Vec<f32>> = fwd
                .params
                .iter()
                .map(|&p| tape.grad(p).expect("parameter gradient").into_data())
                .collect();
            opt.step(
                net.params_mut()
                    .iter_mut()
                    .zip(&grads)
                    .map(|(p, g)| (p.data_mut(), g.as_slice())),
            )?;
            if net.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Training { epoch, step });
            }
            loss_sum += loss_value;
            steps += 1;
        }
        epochs.push(EpochStats {
            epoch,
            mean_loss: loss_sum / steps as f64,
            running_accuracy: hits as f64 / train.len() as f64,
        });
    }

    let train_accuracy = evaluate_accuracy(&net, train)?;
    let test_accuracy = test.map(|t| evaluate_accuracy(&net, t)).transpose()?;
    let params = spec
        .param_shapes()?
        .into_iter()
        .zip(net.params())
        .map(|((name, _), t)| NamedTensor {
            name,
            data: TensorData::F32(t.clone()),
        })
        .collect();
    let metadata = TrainingMetadata {
        dataset: train.name.clone(),
        seed: cfg.seed,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        optimizer: "adam(0.9, 0.999)".into(),
        train_accuracy,
        test_accuracy,
    };
    let ckpt = NetworkCheckpoint::new(spec.clone(), Some(metadata), params)?;
    Ok((
        ckpt,
        TrainReport {
            epochs,
            train_accuracy,
            test_accuracy,
        },
    ))
}
