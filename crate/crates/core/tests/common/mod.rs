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

//! Independent reference implementations used as test oracles, plus small
//! fixtures shared by the integration tests.

#![allow(dead_code)]

use std::sync::OnceLock;

use impression::data::procedural::{two_domain, DEFAULT_GEOMETRY};
use impression::data::{Geometry, ImageBatch, LabeledSet};
use impression::network::{
    init_params, train_template, Layer, NetworkCheckpoint, NetworkSpec, Normalization, TrainConfig,
};
use impression::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Direct six-loop convolution with zero padding.
pub fn conv_oracle(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 4],
    b: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = xs;
    let [k, _, kh, kw] = ws;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * k * oh * ow];
    for s in 0..n {
        for o in 0..k {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b[o]);
                    for ch in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (y * stride + i) as isize - pad as isize;
                                let ix = (xo * stride + j) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x[((s * c + ch) * h + iy as usize) * wd + ix as usize];
                                acc += xv * w[((o * c + ch) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((s * k + o) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    (out, [n, k, oh, ow])
}

/// 2x2 stride-2 max pooling by explicit comparison (first maximum wins).
pub fn maxpool_oracle(x: &[f64], xs: [usize; 4]) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = xs;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for s in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    for i in 0..2 {
                        for j in 0..2 {
                            best = best.max(x[((s * c + ch) * h + 2 * y + i) * w + 2 * xo + j]);
                        }
                    }
                    out.push(best);
                }
            }
        }
    }
    (out, [n, c, oh, ow])
}

/// Per-channel mean and population variance by nested loops. Per-sample
/// results are laid out `[n][c]`; with `over_batch` there is one row.
pub fn stats_oracle(x: &[f64], xs: [usize; 4], over_batch: bool) -> (Vec<f64>, Vec<f64>) {
    let [n, c, h, w] = xs;
    let groups: Vec<Vec<usize>> = if over_batch { vec![(0..n).collect()] } else { (0..n).map(|s| vec![s]).collect() };
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for group in &groups {
        for ch in 0..c {
            let mut values = Vec::new();
            for &s in group {
                for y in 0..h {
                    for xo in 0..w {
                        values.push(x[((s * c + ch) * h + y) * w + xo]);
                    }
                }
            }
            let m = values.iter().sum::<f64>() / values.len() as f64;
            let v = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
            means.push(m);
            vars.push(v);
        }
    }
    (means, vars)
}

/// Central finite difference of `f` along coordinate `i`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] = x[i] + h;
    let up = f(&p);
    p[i] = x[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_images(seed: u64, geometry: Geometry, n: usize) -> ImageBatch {
    let mut r = rng(seed);
    let data: Vec<f64> = uniform(&mut r, n * geometry.numel(), 0.0, 1.0);
    ImageBatch::from_clamped(geometry.shape(n), &data).unwrap()
}

/// conv(3x3, pad 1) -> relu -> conv(3x3, pad 1) -> relu, both ReLUs tapped,
/// randomly initialized.
pub fn two_conv_checkpoint(geometry: Geometry, seed: u64) -> NetworkCheckpoint {
    let spec = NetworkSpec {
        input: geometry,
        classes: 0,
        normalization: Normalization {
            mean: vec![0.45; geometry.channels],
            std: vec![0.25; geometry.channels],
        },
        layers: vec![Layer::conv3(4), Layer::Relu, Layer::conv3(5), Layer::Relu],
        taps: vec![1, 3],
    };
    let params = init_params(&spec, seed).unwrap();
    NetworkCheckpoint::new(spec, None, params).unwrap()
}

/// A network whose only layer is a ReLU on `[0, 1]` pixels, i.e. the
/// identity, tapped directly.
pub fn identity_checkpoint(geometry: Geometry) -> NetworkCheckpoint {
    let spec = NetworkSpec {
        input: geometry,
        classes: 0,
        normalization: Normalization::identity(geometry.channels),
        layers: vec![Layer::Relu],
        taps: vec![0],
    };
    NetworkCheckpoint::new(spec, None, vec![]).unwrap()
}

pub struct Trained {
    pub ckpt: NetworkCheckpoint,
    pub train: LabeledSet,
    pub test: LabeledSet,
}

/// The default small template trained on the procedural two-domain data,
/// shared by every test in a binary.
pub fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let train = two_domain(300, DEFAULT_GEOMETRY, 11);
        let test = two_domain(100, DEFAULT_GEOMETRY, 12);
        let spec = NetworkSpec::small(DEFAULT_GEOMETRY, 2);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (ckpt, _) = train_template(&spec, &train, Some(&test), &cfg).unwrap();
        Trained { ckpt, train, test }
    })
}

/// Outcome of [`fd_impression_gradient`].
pub struct FdReport {
    pub checked: usize,
    pub resampled: usize,
    pub max_rel_err: f64,
}

fn relu_pattern(net: &impression::network::Network<f64>, shape: [usize; 4], pixels: &[f64]) -> Vec<bool> {
    let mut tape = impression::Tape::new();
    let x = tape.constant(tensor(&shape, pixels.to_vec()));
    let fwd = net.forward(&mut tape, x, impression::network::Pass::TapsOnly).unwrap();
    fwd.taps
        .iter()
        .flat_map(|(_, v)| tape.value(*v).data().iter().map(|&a| a > 0.0).collect::<Vec<_>>())
        .collect()
}

/// Pixel gradient of the impression loss against central differences with
/// step `h`, over `samples` random coordinates. A coordinate whose stencil
/// flips any tapped ReLU is a kink crossing, where the loss is not
/// differentiable; it is replaced by a fresh draw.
pub fn fd_impression_gradient(
    net: &impression::network::Network<f64>,
    pixels: &[f64],
    shape: [usize; 4],
    target: &impression::impression::ImpressionCode,
    mode: impression::decoder::MatchingMode,
    h: f64,
    samples: usize,
    seed: u64,
) -> FdReport {
    use impression::decoder::impression_loss;
    let loss = |p: &[f64]| {
        let mut tape = impression::Tape::new();
        let x = tape.constant(tensor(&shape, p.to_vec()));
        let l = impression_loss(net, &mut tape, x, target, mode).unwrap();
        tape.value(l.loss).data()[0]
    };
    let analytic = {
        let mut tape = impression::Tape::new();
        let x = tape.leaf(tensor(&shape, pixels.to_vec()), true);
        let l = impression_loss(net, &mut tape, x, target, mode).unwrap();
        tape.backward(l.loss).unwrap();
        tape.grad(x).unwrap().into_data()
    };
    let base = relu_pattern(net, shape, pixels);
    let mut r = rng(seed);
    let (mut checked, mut resampled, mut worst) = (0, 0, 0.0f64);
    while checked < samples {
        let i = r.gen_range(0..pixels.len());
        let mut p = pixels.to_vec();
        p[i] = pixels[i] + h;
        let up = relu_pattern(net, shape, &p);
        p[i] = pixels[i] - h;
        let down = relu_pattern(net, shape, &p);
        if up != base || down != base {
            resampled += 1;
            continue;
        }
        let mut f = |x: &[f64]| loss(x);
        let numeric = central_difference(&mut f, pixels, i, h);
        worst = worst.max(rel_err(analytic[i], numeric, 1e-6));
        checked += 1;
    }
    FdReport {
        checked,
        resampled,
        max_rel_err: worst,
    }
}
