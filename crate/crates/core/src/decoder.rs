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

//! Decoding impressions back into pixels.
//!
//! Images start as noise (or as given pixels) and are updated with Adam so
//! that their impression code approaches a target code. Each iteration
//! jitters the images with an edge-replicating shift and a random horizontal
//! flip before the forward pass; pixels are clamped to `[0, 1]` after every
//! step. Adam steps are taken in the template's normalized input
//! coordinates, so a step of `lr` moves channel `c` by at most about
//! `lr * std_c` in pixel units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adam::{adam_step, AdamConfig, AdamState};
use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::impression::{sample_stats, CodeSchema, ImpressionCode};
use crate::network::{Network, Pass};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// How the current images are compared with the target code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchingMode {
    /// Every image is encoded on its own; the loss is the batch mean.
    #[default]
    #[serde(rename = "per-image")]
    PerImage,
    /// The batch is encoded as one ensembled code.
    #[serde(rename = "ensemble")]
    BatchEnsemble,
}

impl std::str::FromStr for MatchingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-image" => Ok(MatchingMode::PerImage),
            "ensemble" => Ok(MatchingMode::BatchEnsemble),
            other => Err(Error::Config(format!("unknown matching mode {other:?} (per-image or ensemble)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Augmentation {
    /// Pad by this many edge-replicated pixels, then crop back at a random
    /// offset.
    pub shift: usize,
    pub flip_probability: f64,
}

impl Augmentation {
    pub const NONE: Augmentation = Augmentation {
        shift: 0,
        flip_probability: 0.0,
    };

    fn is_identity(&self) -> bool {
        self.shift == 0 && self.flip_probability == 0.0
    }
}

impl Default for Augmentation {
    fn default() -> Self {
        Augmentation {
            shift: 4,
            flip_probability: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub iterations: usize,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Noise initialization, clamped to `[0, 1]`.
    pub init_mean: f64,
    pub init_std: f64,
    pub augmentation: Augmentation,
    pub mode: MatchingMode,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            iterations: 2000,
            adam: AdamConfig::default(),
            batch_size: 32,
            init_mean: 0.5,
            init_std: 0.2,
            augmentation: Augmentation::default(),
            mode: MatchingMode::PerImage,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.adam.validate()?;
        let p = self.augmentation.flip_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("flip probability {p} outside [0, 1]")));
        }
        if !(self.init_std >= 0.0 && self.init_mean.is_finite() && self.init_std.is_finite()) {
            return Err(Error::Config("init mean/std must be finite, std >= 0".into()));
        }
        Ok(())
    }
}

/// Loss values of one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    /// `impression + lambda / 2 * content`
    pub total: f64,
    /// Batch mean of `1/2 |z - z_target|^2` (or the ensembled equivalent).
    pub impression: f64,
    /// Batch mean of `|x - x_source|^2`; zero when no source is anchored.
    pub content: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisResult {
    pub images: ImageBatch,
    /// Total loss before each of the `k` updates.
    pub loss_trajectory: Vec<f64>,
    pub components: Vec<LossComponents>,
    /// Per-image `1/2 |z - z_target|^2` of the returned images, without
    /// augmentation.
    pub final_losses: Vec<f64>,
}

/// A recorded impression loss.
#[derive(Clone, Debug)]
pub struct ImpressionLoss {
    /// Scalar loss on the tape.
    pub loss: Var,
    /// `[N]` per-image losses on the tape (per-image mode only).
    pub per_image_var: Option<Var>,
    /// Per-image `1/2 |z_n - z_target|^2` values.
    pub per_image: Vec<f64>,
}

struct TargetStats<T> {
    mean: Vec<Option<Vec<T>>>,
    var: Vec<Option<Vec<T>>>,
}

fn target_stats<T: Real>(target: &ImpressionCode) -> TargetStats<T> {
    let conv = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v.iter().map(|&x| T::of(x)).collect());
    TargetStats {
        mean: target.taps().iter().map(|t| conv(&t.mean)).collect(),
        var: target.taps().iter().map(|t| conv(&t.var)).collect(),
    }
}

/// Per-image `1/2 |z_n - z_target|^2` computed from tapped activations,
/// reading only the statistics the target's schema carries.
fn per_image_values<T: Real>(tape: &Tape<T>, taps: &[(String, Var)], target: &ImpressionCode) -> Vec<f64> {
    let n = tape.value(taps[0].1).shape()[0];
    let mut out = vec![0.0f64; n];
    for ((_, var), t) in taps.iter().zip(target.taps()) {
        let act = tape.value(*var);
        let c = act.shape()[1];
        let (means, vars) = sample_stats(act);
        for (stats, goal) in [(&means, &t.mean), (&vars, &t.var)] {
            if let Some(goal) = goal {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += 0.5
                        * stats[i * c..(i + 1) * c]
                            .iter()
                            .zip(goal)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>();
                }
            }
        }
    }
    out
}

/// Records `1/2 |z - z_target|^2` for the images in `images` (pixels in
/// `[0, 1]`). Per-image mode averages over the batch; ensemble mode encodes
/// the batch as one code.
pub fn impression_loss<T: Real>(
    net: &Network<T>,
    tape: &mut Tape<T>,
    images: Var,
    target: &ImpressionCode,
    mode: MatchingMode,
) -> Result<ImpressionLoss> {
    target.check_network(net)?;
    let fwd = net.forward(tape, images, Pass::TapsOnly)?;
    let stats = target_stats::<T>(target);
    let over_batch = mode == MatchingMode::BatchEnsemble;
    let mut acc: Option<Var> = None;
    for (t, (_, act)) in fwd.taps.iter().enumerate() {
        let pairs = [(&stats.mean[t], false), (&stats.var[t], true)];
        for (goal, is_var) in pairs {
            let Some(goal) = goal else { continue };
            let s = if is_var {
                tape.channel_var(*act, over_batch)?
            } else {
                tape.channel_mean(*act, over_batch)?
            };
            let d = tape.sub_row(s, goal)?;
            let sq = tape.square_sum_rows(d)?;
            acc = Some(match acc {
                None => sq,
                Some(a) => tape.add(a, sq)?,
            });
        }
    }
    let sq = acc.ok_or_else(|| Error::Contract("target code has no statistics".into()))?;
    let half = tape.scale(sq, T::of(0.5))?;
    let per_image = per_image_values(tape, &fwd.taps, target);
    let (loss, per_image_var) = match mode {
        MatchingMode::PerImage => (tape.mean(half)?, Some(half)),
        MatchingMode::BatchEnsemble => (tape.sum(half)?, None),
    };
    Ok(ImpressionLoss {
        loss,
        per_image_var,
        per_image,
    })
}

/// Gather indices for an edge-replicating shift by `(dy, dx)` within a
/// `2 * shift` window, followed by an optional horizontal flip.
fn augment_index(shape: [usize; 4], draws: &[(usize, usize, bool)], shift: usize) -> Vec<usize> {
    let [n, c, h, w] = shape;
    let mut idx = Vec::with_capacity(n * c * h * w);
    for (s, &(dy, dx, flip)) in draws.iter().enumerate() {
        for ch in 0..c {
            let base = (s * c + ch) * h * w;
            for y in 0..h {
                let sy = (y + dy).saturating_sub(shift).min(h - 1);
                for x in 0..w {
                    let cx = if flip { w - 1 - x } else { x };
                    let sx = (cx + dx).saturating_sub(shift).min(w - 1);
                    idx.push(base + sy * w + sx);
                }
            }
        }
    }
    idx
}

/// Content anchor for translation: `lambda / 2 * |x - source|^2`.
pub(crate) struct Anchor<'a> {
    pub source: &'a ImageBatch,
    pub lambda: f64,
}

fn map_numeric(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(_) => Error::Diverged {
            iteration,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// The shared optimization loop behind synthesis and translation.
pub(crate) fn optimize<T: Real>(
    net: &Network<T>,
    target: &ImpressionCode,
    cfg: &SynthesisConfig,
    init: &ImageBatch,
    rng: &mut ChaCha8Rng,
    anchor: Option<Anchor<'_>>,
) -> Result<SynthesisResult> {
    cfg.validate()?;
    target.check_network(net)?;
    let shape: [usize; 4] = init.geometry().shape(init.len());
    net.check_geometry(&shape)?;
    if let Some(a) = &anchor {
        if a.source.tensor().shape() != shape {
            return Err(Error::dim("translation source", &shape, a.source.tensor().shape()));
        }
        if !(a.lambda >= 0.0 && a.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", a.lambda)));
        }
    }
    let source: Option<Tensor<T>> = anchor.as_ref().map(|a| a.source.cast());
    let lambda = anchor.as_ref().map_or(0.0, |a| a.lambda);

    // Adam runs in the template's normalized input coordinates: a unit step
    // there is `std_c` in pixel units.
    let plane = shape[2] * shape[3];
    let std: Vec<T> = net.spec().normalization.std.iter().map(|&s| T::of(s as f64)).collect();
    let channel_of = |i: usize| (i / plane) % shape[1];
    let mut pixels: Vec<T> = init.cast::<T>().into_data();
    let mut coords: Vec<T> = vec![T::zero(); pixels.len()];
    let mut state = AdamState::zeros(pixels.len());
    let mut trajectory = Vec::with_capacity(cfg.iterations);
    let mut components = Vec::with_capacity(cfg.iterations);
    let aug = cfg.augmentation;
    let n = shape[0];

    for it in 0..cfg.iterations {
        let draws: Vec<(usize, usize, bool)> = (0..n)
            .map(|_| {
                let dy = rng.gen_range(0..=2 * aug.shift);
                let dx = rng.gen_range(0..=2 * aug.shift);
                (dy, dx, rng.gen_bool(aug.flip_probability))
            })
            .collect();

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(shape, pixels.clone())?, true);
        let seen = if aug.is_identity() {
            x
        } else {
            tape.gather(x, augment_index(shape, &draws, aug.shift), shape)
                .map_err(map_numeric(it))?
        };
        let imp = impression_loss(net, &mut tape, seen, target, cfg.mode).map_err(map_numeric(it))?;
        let impression = tape.value(imp.loss).data()[0].f64();

        let (loss, content) = match &source {
            Some(src) => {
                let diff = tape.sub_const(x, src)?;
                let flat = tape.reshape(diff, [n, shape[1] * shape[2] * shape[3]])?;
                let sq = tape.square_sum_rows(flat)?;
                let content = tape.value(sq).data().iter().map(|v| v.f64()).sum::<f64>() / n as f64;
                let loss = if lambda > 0.0 {
                    let weighted = tape.scale(sq, T::of(0.5 * lambda))?;
                    match imp.per_image_var {
                        Some(per_image) => {
                            let both = tape.add(per_image, weighted)?;
                            tape.mean(both)?
                        }
                        None => {
                            let c = tape.mean(weighted)?;
                            tape.add(imp.loss, c)?
                        }
                    }
                } else {
                    imp.loss
                };
                (loss, content)
            }
            None => (imp.loss, 0.0),
        };
        let total = tape.value(loss).data()[0].f64();
        if !total.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                loss: total,
            });
        }
        trajectory.push(total);
        components.push(LossComponents {
            total,
            impression,
            content,
        });

        tape.backward(loss)?;
        let mut grad = tape.grad(x).expect("pixels require grad").into_data();
        for (i, (z, g)) in coords.iter_mut().zip(&mut grad).enumerate() {
            let s = std[channel_of(i)];
            *z = pixels[i] / s;
            *g = *g * s;
        }
        adam_step(&mut coords, &grad, &mut state, &cfg.adam, it + 1)?;
        for (i, (p, z)) in pixels.iter_mut().zip(&coords).enumerate() {
            *p = (*z * std[channel_of(i)]).max(T::zero()).min(T::one());
        }
    }

    let images = ImageBatch::from_clamped(shape, &pixels)?;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(shape, pixels)?);
    let final_losses = impression_loss(net, &mut tape, x, target, MatchingMode::PerImage)?.per_image;
    Ok(SynthesisResult {
        images,
        loss_trajectory: trajectory,
        components,
        final_losses,
    })
}

/// Noise images drawn from the configured clamped Gaussian.
pub fn noise_init(cfg: &SynthesisConfig, shape: [usize; 4], rng: &mut ChaCha8Rng) -> Result<ImageBatch> {
    let normal = Normal::new(cfg.init_mean, cfg.init_std).map_err(|e| Error::Config(e.to_string()))?;
    let data: Vec<f64> = (0..shape.iter().product::<usize>()).map(|_| normal.sample(rng)).collect();
    ImageBatch::from_clamped(shape, &data)
}

/// Synthesizes `cfg.batch_size` images from noise whose impressions match
/// `target`.
pub fn synthesize<T: Real>(net: &Network<T>, target: &ImpressionCode, cfg: &SynthesisConfig) -> Result<SynthesisResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = noise_init(cfg, net.spec().input.shape(cfg.batch_size), &mut rng)?;
    optimize(net, target, cfg, &init, &mut rng, None)
}

/// Like [`synthesize`], starting from `init` instead of noise. The batch size
/// is taken from `init`.
pub fn synthesize_from<T: Real>(
    net: &Network<T>,
    target: &ImpressionCode,
    cfg: &SynthesisConfig,
    init: &ImageBatch,
) -> Result<SynthesisResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    optimize(net, target, cfg, init, &mut rng, None)
}

/// Whether the schema reads variance entries; exposed for ablation checks.
pub fn reads_variance(schema: CodeSchema) -> bool {
    schema.has_var()
}
