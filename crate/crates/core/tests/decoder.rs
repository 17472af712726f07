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

//! Decoding: the impression loss, its pixel gradient and the synthesis loop.

mod common;

use common::{fd_impression_gradient, identity_checkpoint, random_images, rng, tensor, trained, two_conv_checkpoint, uniform};
use impression::data::{Geometry, ImageBatch};
use impression::decoder::{
    impression_loss, synthesize, synthesize_from, Augmentation, MatchingMode, SynthesisConfig,
};
use impression::impression::{distance, encode, encode_each, encode_ensemble, CodeSchema};
use impression::network::{NamedTensor, NetworkCheckpoint, TensorData};
use impression::{Error, Tape, Tensor};

const G8: Geometry = Geometry {
    channels: 3,
    height: 8,
    width: 8,
};

fn quick(iterations: usize, batch_size: usize) -> SynthesisConfig {
    SynthesisConfig {
        iterations,
        batch_size,
        ..SynthesisConfig::default()
    }
}

#[test]
fn pixel_gradient_matches_finite_differences() {
    let net = two_conv_checkpoint(G8, 21).network::<f64>();
    let target = encode(&net, &random_images(1, G8, 1), CodeSchema::MeanVar).unwrap();
    let pixels = uniform(&mut rng(2), 2 * G8.numel(), 0.05, 0.95);
    for (mode, seed) in [(MatchingMode::PerImage, 3), (MatchingMode::BatchEnsemble, 4)] {
        let report = fd_impression_gradient(&net, &pixels, G8.shape(2), &target, mode, 1e-3, 200, seed);
        assert_eq!(report.checked, 200);
        assert!(report.max_rel_err < 1e-4, "{mode:?}: {}", report.max_rel_err);
    }
}

#[test]
fn loss_vanishes_at_the_target() {
    let net = two_conv_checkpoint(G8, 5).network::<f64>();
    let img = random_images(6, G8, 1);
    for schema in [CodeSchema::MeanOnly, CodeSchema::VarOnly, CodeSchema::MeanVar] {
        let target = encode(&net, &img, schema).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(img.cast::<f64>(), true);
        let l = impression_loss(&net, &mut tape, x, &target, MatchingMode::PerImage).unwrap();
        assert!(tape.value(l.loss).data()[0].abs() < 1e-20);
        tape.backward(l.loss).unwrap();
        assert!(tape.grad(x).unwrap().data().iter().all(|g| g.abs() < 1e-12));
    }
}

#[test]
fn loss_is_half_squared_distance() {
    let net = two_conv_checkpoint(G8, 7).network::<f64>();
    let images = random_images(8, G8, 3);
    for schema in [CodeSchema::MeanOnly, CodeSchema::VarOnly, CodeSchema::MeanVar] {
        let target = encode(&net, &random_images(9, G8, 1), schema).unwrap();
        let codes = encode_each(&net, &images, schema).unwrap();
        let halves: Vec<f64> = codes.iter().map(|c| 0.5 * distance(c, &target).unwrap().powi(2)).collect();

        let mut tape = Tape::new();
        let x = tape.constant(images.cast::<f64>());
        let l = impression_loss(&net, &mut tape, x, &target, MatchingMode::PerImage).unwrap();
        let mean = halves.iter().sum::<f64>() / 3.0;
        assert!((tape.value(l.loss).data()[0] - mean).abs() < 1e-9 * mean.max(1.0));
        for (a, b) in l.per_image.iter().zip(&halves) {
            assert!((a - b).abs() < 1e-9 * b.max(1.0));
        }

        let ens = encode_ensemble(&net, [&images], schema).unwrap();
        let want = 0.5 * distance(&ens, &target).unwrap().powi(2);
        let mut tape = Tape::new();
        let x = tape.constant(images.cast::<f64>());
        let l = impression_loss(&net, &mut tape, x, &target, MatchingMode::BatchEnsemble).unwrap();
        assert!((tape.value(l.loss).data()[0] - want).abs() < 1e-9 * want.max(1.0));
    }
}

#[test]
fn one_iteration_moves_at_most_one_step() {
    let ckpt = two_conv_checkpoint(G8, 9);
    let net = ckpt.network::<f32>();
    let target = encode(&net, &random_images(1, G8, 1), CodeSchema::MeanVar).unwrap();
    let init = random_images(2, G8, 4);
    let cfg = quick(1, 4);
    let r = synthesize_from(&net, &target, &cfg, &init).unwrap();
    let max_std = ckpt.spec().normalization.std.iter().fold(0.0f32, |a, &b| a.max(b)) as f64;
    let moved = r
        .images
        .data()
        .iter()
        .zip(init.data())
        .map(|(a, b)| (a - b).abs() as f64)
        .fold(0.0, f64::max);
    assert!(moved > 0.0);
    assert!(moved <= cfg.adam.lr * max_std * (1.0 + 1e-5), "{moved}");
    assert_eq!(r.loss_trajectory.len(), 1);
}

#[test]
fn synthesis_is_seeded_and_clamped() {
    let net = two_conv_checkpoint(G8, 10).network::<f32>();
    let target = encode(&net, &random_images(3, G8, 1), CodeSchema::MeanVar).unwrap();
    let cfg = quick(30, 3);
    let a = synthesize(&net, &target, &cfg).unwrap();
    let b = synthesize(&net, &target, &cfg).unwrap();
    assert_eq!(a, b);
    let c = synthesize(&net, &target, &SynthesisConfig { seed: 1, ..cfg.clone() }).unwrap();
    assert_ne!(a.images, c.images);
    assert_eq!(a.loss_trajectory.len(), 30);
    assert_eq!(a.final_losses.len(), 3);
    assert!(a.images.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    assert!(a.loss_trajectory.iter().chain(&a.final_losses).all(|&l| l >= 0.0));
    assert!(a.components.iter().all(|c| c.content == 0.0 && c.total == c.impression));
}

#[test]
fn mean_only_target_ignores_variance() {
    let net = two_conv_checkpoint(G8, 11).network::<f64>();
    let img = random_images(4, G8, 1);
    let target = encode(&net, &random_images(5, G8, 1), CodeSchema::MeanOnly).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(img.cast::<f64>());
    let l = impression_loss(&net, &mut tape, x, &target, MatchingMode::PerImage).unwrap();
    let mine = encode(&net, &img, CodeSchema::MeanVar).unwrap().restrict(CodeSchema::MeanOnly).unwrap();
    let want = 0.5 * distance(&mine, &target).unwrap().powi(2);
    assert!((tape.value(l.loss).data()[0] - want).abs() < 1e-9 * want.max(1.0));
}

#[test]
fn convex_identity_oracle_recovers_the_target() {
    let net = identity_checkpoint(G8).network::<f64>();
    let target = encode(&net, &random_images(12, G8, 1), CodeSchema::MeanVar).unwrap();
    let mut cfg = quick(5000, 1);
    cfg.augmentation = Augmentation::NONE;
    cfg.adam.lr = 1e-4;
    let r = synthesize(&net, &target, &cfg).unwrap();
    assert!(r.final_losses[0] < 1e-8, "{}", r.final_losses[0]);
}

#[test]
fn moving_average_trends_down() {
    let t = trained();
    let net = t.ckpt.network::<f32>();
    let target = encode(&net, &t.test.images.image(0), CodeSchema::MeanVar).unwrap();
    let r = synthesize(&net, &target, &quick(400, 2)).unwrap();
    let avg = |a: usize| r.loss_trajectory[a..a + 100].iter().sum::<f64>() / 100.0;
    assert!(avg(0) > avg(100));
    assert!(avg(300) <= avg(100) * 1.05, "{} vs {}", avg(300), avg(100));
}

#[test]
fn overflow_reports_the_iteration() {
    let ckpt = two_conv_checkpoint(G8, 1);
    let params: Vec<NamedTensor> = ckpt
        .params()
        .iter()
        .map(|p| NamedTensor {
            name: p.name.clone(),
            data: TensorData::F32(Tensor::full(p.data.shape().to_vec(), 1e25f32)),
        })
        .collect();
    let huge = NetworkCheckpoint::new(ckpt.spec().clone(), None, params).unwrap();
    let sane = ckpt.network::<f32>();
    let target = encode(&sane, &random_images(1, G8, 1), CodeSchema::MeanVar).unwrap();
    let target = impression::impression::ImpressionCode::new(
        target.schema(),
        huge.fingerprint(),
        1,
        target.taps().to_vec(),
    )
    .unwrap();
    match synthesize(&huge.network::<f32>(), &target, &quick(5, 1)) {
        Err(Error::Diverged { iteration, .. }) => assert_eq!(iteration, 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn incompatible_targets_and_configs_are_rejected() {
    let net = two_conv_checkpoint(G8, 1).network::<f32>();
    let other = two_conv_checkpoint(G8, 2).network::<f32>();
    let target = encode(&other, &random_images(1, G8, 1), CodeSchema::MeanVar).unwrap();
    assert!(matches!(synthesize(&net, &target, &quick(2, 1)), Err(Error::Incompatible { .. })));

    let target = encode(&net, &random_images(1, G8, 1), CodeSchema::MeanVar).unwrap();
    assert!(matches!(synthesize(&net, &target, &quick(0, 1)), Err(Error::Config(_))));
    assert!(matches!(synthesize(&net, &target, &quick(1, 0)), Err(Error::Config(_))));
    let wrong = ImageBatch::new(Tensor::full([1, 3, 6, 6], 0.5)).unwrap();
    assert!(matches!(
        synthesize_from(&net, &target, &quick(1, 1), &wrong),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn noise_init_is_clamped_gaussian() {
    let net = identity_checkpoint(Geometry::new(1, 32, 32)).network::<f64>();
    let target = encode(&net, &random_images(1, Geometry::new(1, 32, 32), 1), CodeSchema::MeanOnly).unwrap();
    // a vanishing learning rate leaves the initialization in place
    let mut cfg = quick(1, 16);
    cfg.adam.lr = 1e-12;
    let r = synthesize(&net, &target, &cfg).unwrap();
    let d = r.images.data();
    let mean = d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d.len() as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
    assert!((var.sqrt() - 0.2).abs() < 0.01, "{}", var.sqrt());
    let _ = tensor(&[1], vec![0.0]);
}
