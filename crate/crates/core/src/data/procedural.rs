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

//! Seeded two-domain texture dataset.
//!
//! Class 0 ("stripes") places a disc of warm, oriented sinusoidal stripes on
//! a noisy neutral background; class 1 ("spots") fills the disc with a cool
//! lattice of dots. Every image is a pure function of `(seed, class, index)`,
//! so train, test and pool splits can be drawn from disjoint seeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Geometry, ImageBatch, LabeledSet};
use crate::tensor::Tensor;

pub const STRIPES: usize = 0;
pub const SPOTS: usize = 1;
pub const CLASS_NAMES: [&str; 2] = ["stripes", "spots"];

pub const DEFAULT_GEOMETRY: Geometry = Geometry::new(3, 32, 32);

fn image_rng(seed: u64, class: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 40) | index as u64);
    rng
}

fn jitter(rng: &mut ChaCha8Rng, base: [f32; 3], amount: f32) -> [f32; 3] {
    base.map(|v| (v + rng.gen_range(-amount..=amount)).clamp(0.0, 1.0))
}

fn to_channels(rgb: [f32; 3], channels: usize, out: &mut [f32]) {
    if channels == 3 {
        out.copy_from_slice(&rgb);
    } else {
        let luma = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
        out.iter_mut().for_each(|v| *v = luma);
    }
}

/// Renders one image of `class` as `C x H x W` pixels.
pub fn render(class: usize, geometry: Geometry, seed: u64, index: usize) -> Vec<f32> {
    let mut rng = image_rng(seed, class, index);
    let Geometry {
        channels,
        height: h,
        width: w,
    } = geometry;
    let size = h.min(w) as f32;
    let noise = Normal::new(0.0f32, 0.04).expect("valid normal");

    let bg_level: f32 = rng.gen_range(0.3..0.7);
    let bg_tint = jitter(&mut rng, [bg_level; 3], 0.05);
    let (gx, gy): (f32, f32) = (rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15));

    let cx = rng.gen_range(0.35..0.65) * w as f32;
    let cy = rng.gen_range(0.35..0.65) * h as f32;
    let radius = rng.gen_range(0.28..0.42) * size;

    let (light, dark) = if class == STRIPES {
        (
            jitter(&mut rng, [0.95, 0.62, 0.15], 0.06),
            jitter(&mut rng, [0.55, 0.15, 0.05], 0.06),
        )
    } else {
        (
            jitter(&mut rng, [0.25, 0.75, 0.95], 0.06),
            jitter(&mut rng, [0.05, 0.2, 0.45], 0.06),
        )
    };
    let theta: f32 = rng.gen_range(0.0..std::f32::consts::PI);
    let freq: f32 = rng.gen_range(2.5..4.5) / size;
    let phase: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let spacing: f32 = rng.gen_range(5.0..7.5) * size / 32.0;
    let (ox, oy): (f32, f32) = (rng.gen_range(0.0..spacing), rng.gen_range(0.0..spacing));
    let dot = spacing * 0.3;

    let mut out = vec![0.0f32; geometry.numel()];
    let mut px = [0.0f32; 3];
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f32 + 0.5, y as f32 + 0.5);
            let ramp = gx * (xf / w as f32 - 0.5) + gy * (yf / h as f32 - 0.5);
            let mut rgb = bg_tint.map(|v| v + ramp);

            let d = ((xf - cx).powi(2) + (yf - cy).powi(2)).sqrt();
            let alpha = (radius - d + 0.5).clamp(0.0, 1.0);
            if alpha > 0.0 {
                let t = if class == STRIPES {
                    let u = xf * theta.cos() + yf * theta.sin();
                    0.5 + 0.5 * (std::f32::consts::TAU * freq * u + phase).sin()
                } else {
                    let (rx, ry) = ((xf + ox) % spacing - spacing / 2.0, (yf + oy) % spacing - spacing / 2.0);
                    (dot - (rx * rx + ry * ry).sqrt() + 0.5).clamp(0.0, 1.0)
                };
                for ch in 0..3 {
                    let fg = dark[ch] + (light[ch] - dark[ch]) * t;
                    rgb[ch] = rgb[ch] * (1.0 - alpha) + fg * alpha;
                }
            }
            for (ch, v) in rgb.iter().enumerate() {
                px[ch] = (v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
            let mut pix = vec![0.0f32; channels];
            to_channels(px, channels, &mut pix);
            for (ch, v) in pix.into_iter().enumerate() {
                out[(ch * h + y) * w + x] = v;
            }
        }
    }
    out
}

/// `per_class` images of one class.
pub fn class_batch(class: usize, per_class: usize, geometry: Geometry, seed: u64) -> ImageBatch {
    let mut data = Vec::with_capacity(per_class * geometry.numel());
    for i in 0..per_class {
        data.extend(render(class, geometry, seed, i));
    }
    ImageBatch::new(Tensor::new(geometry.shape(per_class), data).expect("shape")).expect("pixels in range")
}

/// Balanced labeled set, classes interleaved (0, 1, 0, 1, ...).
pub fn two_domain(per_class: usize, geometry: Geometry, seed: u64) -> LabeledSet {
    let mut data = Vec::with_capacity(2 * per_class * geometry.numel());
    let mut labels = Vec::with_capacity(2 * per_class);
    for i in 0..per_class {
        for class in [STRIPES, SPOTS] {
            data.extend(render(class, geometry, seed, i));
            labels.push(class);
        }
    }
    let images = ImageBatch::new(Tensor::new(geometry.shape(labels.len()), data).expect("shape"))
        .expect("pixels in range");
    LabeledSet::new(format!("procedural-two-domain(seed={seed})"), images, labels).expect("aligned")
}
