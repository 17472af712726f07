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

//! Translation: limits of the content weight and the effect on codes.

mod common;

use common::trained;
use impression::data::procedural::{class_batch, DEFAULT_GEOMETRY, SPOTS, STRIPES};
use impression::data::ImageBatch;
use impression::decoder::{synthesize_from, SynthesisConfig};
use impression::impression::{distance, encode_each, encode_ensemble, CodeSchema, ImpressionCode};
use impression::network::Network;
use impression::translator::{translate, TranslateConfig};
use impression::Error;

fn cfg(lambda: f64, iterations: usize) -> TranslateConfig {
    TranslateConfig::new(
        lambda,
        SynthesisConfig {
            iterations,
            seed: 5,
            ..SynthesisConfig::default()
        },
    )
}

fn linf(a: &ImageBatch, b: &ImageBatch) -> f32 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn sq(a: &ImageBatch, b: &ImageBatch) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum()
}

fn mean_distance(net: &Network<f32>, images: &ImageBatch, code: &ImpressionCode) -> f64 {
    let codes = encode_each(net, images, code.schema()).unwrap();
    codes.iter().map(|c| distance(c, code).unwrap()).sum::<f64>() / codes.len() as f64
}

fn setup() -> (Network<f32>, ImageBatch, ImpressionCode) {
    let net = trained().ckpt.network::<f32>();
    let source = class_batch(STRIPES, 3, DEFAULT_GEOMETRY, 40);
    let target = encode_ensemble(&net, [&class_batch(SPOTS, 32, DEFAULT_GEOMETRY, 41)], CodeSchema::MeanVar).unwrap();
    (net, source, target)
}

#[test]
fn zero_lambda_reduces_to_synthesis_from_the_source() {
    let (net, source, target) = setup();
    let c = cfg(0.0, 25);
    let t = translate(&net, &source, &target, &c).unwrap();
    let s = synthesize_from(&net, &target, &c.synthesis, &source).unwrap();
    assert_eq!(t.loss_trajectory, s.loss_trajectory);
    assert_eq!(t.images, s.images);
    assert!(t.components[0].content == 0.0);
}

#[test]
fn huge_lambda_pins_the_source() {
    let (net, source, target) = setup();
    let mut pinned = cfg(1e6, 200);
    pinned.synthesis.adam.lr = 0.01;
    let free = TranslateConfig { lambda: 0.0, ..pinned.clone() };
    let p = translate(&net, &source, &target, &pinned).unwrap();
    let f = translate(&net, &source, &target, &free).unwrap();
    assert!(linf(&p.images, &source) <= 0.01, "{}", linf(&p.images, &source));
    assert!(linf(&f.images, &source) > 0.01);
}

#[test]
fn content_distance_shrinks_as_lambda_grows() {
    let (net, source, target) = setup();
    let mut last = f64::INFINITY;
    for lambda in [0.0, 1e-5, 1e-3, 1e-1, 10.0] {
        let r = translate(&net, &source, &target, &cfg(lambda, 120)).unwrap();
        let d = sq(&r.images, &source);
        assert!(d <= last * 1.05, "lambda {lambda}: {d} after {last}");
        last = d;
        if lambda <= 1e-3 {
            let first = r.components[0].impression;
            let end = r.components.last().unwrap().impression;
            assert!(end <= first, "lambda {lambda}: {end} > {first}");
        }
        for c in &r.components {
            let want = c.impression + 0.5 * lambda * c.content;
            assert!((c.total - want).abs() <= 1e-6 * want.max(1.0));
        }
    }
}

#[test]
fn translation_to_own_domain_stays_home() {
    let (net, source, other) = setup();
    let own = encode_ensemble(&net, [&class_batch(STRIPES, 32, DEFAULT_GEOMETRY, 42)], CodeSchema::MeanVar).unwrap();
    let r = translate(&net, &source, &own, &cfg(1e-5, 100)).unwrap();
    assert!(mean_distance(&net, &r.images, &own) < mean_distance(&net, &r.images, &other));
}

#[test]
fn translation_moves_codes_toward_the_target_domain() {
    let (net, source, target) = setup();
    let before = mean_distance(&net, &source, &target);
    let r = translate(&net, &source, &target, &cfg(1e-1, 150)).unwrap();
    assert!(mean_distance(&net, &r.images, &target) < 0.5 * before);
}

#[test]
fn invalid_requests() {
    let (net, source, target) = setup();
    assert!(matches!(translate(&net, &source, &target, &cfg(-1e-3, 5)), Err(Error::Config(_))));
    let empty = ImageBatch::empty(DEFAULT_GEOMETRY);
    assert!(translate(&net, &empty, &target, &cfg(0.0, 5)).is_err());
    let small = class_batch(STRIPES, 1, impression::data::Geometry::new(3, 16, 16), 1);
    assert!(matches!(translate(&net, &small, &target, &cfg(0.0, 5)), Err(Error::Dimension { .. })));
}
