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

//! Seed codes, corpus ranking and selection.

mod common;

use std::collections::HashMap;

use common::{rng, trained};
use impression::data::procedural::{class_batch, two_domain, DEFAULT_GEOMETRY, SPOTS, STRIPES};
use impression::data::{parse_manifest, save_png, Geometry, ImageBatch};
use impression::impression::{distance, encode, CodeSchema};
use impression::retrieval::{build_seed_code, manifest_corpus, precision_at_k, rank_by_distance, select_top};
use impression::{Error, Result, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn corpus(images: &ImageBatch, prefix: &str) -> Vec<(String, Result<ImageBatch>)> {
    (0..images.len()).map(|i| (format!("{prefix}{i:04}"), Ok(images.image(i)))).collect()
}

#[test]
fn seed_code_of_one_image_is_its_code() {
    let net = trained().ckpt.network::<f32>();
    let img = trained().test.images.image(0);
    let seed = build_seed_code(&net, [&img], CodeSchema::MeanVar).unwrap();
    assert!(distance(&seed, &encode(&net, &img, CodeSchema::MeanVar).unwrap()).unwrap() < 1e-9);
}

#[test]
fn duplicated_seed_set_gives_the_same_code() {
    let net = trained().ckpt.network::<f32>();
    let labeled = class_batch(STRIPES, 5, DEFAULT_GEOMETRY, 3);
    let a = build_seed_code(&net, [&labeled], CodeSchema::MeanVar).unwrap();
    let b = build_seed_code(&net, [&labeled, &labeled], CodeSchema::MeanVar).unwrap();
    assert_eq!((a.ensemble_size(), b.ensemble_size()), (5, 10));
    assert!(distance(&a, &b).unwrap() < 1e-6);
}

#[test]
fn empty_corpus_ranks_nothing() {
    let net = trained().ckpt.network::<f32>();
    let seed = build_seed_code(&net, [&class_batch(STRIPES, 2, DEFAULT_GEOMETRY, 1)], CodeSchema::MeanVar).unwrap();
    let ranked = rank_by_distance(&net, &seed, Vec::new(), CodeSchema::MeanVar).unwrap();
    assert!(ranked.is_empty() && ranked.skipped().is_empty());
    assert!(select_top(&ranked, 0).unwrap().is_empty());
}

#[test]
fn ranking_ignores_corpus_order_and_breaks_ties_by_id() {
    let net = trained().ckpt.network::<f32>();
    let seed = build_seed_code(&net, [&class_batch(STRIPES, 4, DEFAULT_GEOMETRY, 1)], CodeSchema::MeanVar).unwrap();
    let pool = two_domain(40, DEFAULT_GEOMETRY, 2).images;
    let mut items: Vec<(String, ImageBatch)> = (0..pool.len()).map(|i| (format!("p{i:04}"), pool.image(i))).collect();
    // exact duplicates under different ids tie on distance
    items.push(("zz-dup".into(), pool.image(0)));
    items.push(("aa-dup".into(), pool.image(0)));
    let rank = |items: &[(String, ImageBatch)]| {
        rank_by_distance(&net, &seed, items.iter().map(|(i, b)| (i.clone(), Ok(b.clone()))), CodeSchema::MeanVar).unwrap()
    };
    let reference = rank(&items);
    let mut r = rng(3);
    for _ in 0..2 {
        items.shuffle(&mut r);
        assert_eq!(rank(&items), reference);
    }
    let pos = |id: &str| reference.rank_of(id).unwrap();
    let (a, p, z) = (pos("aa-dup"), pos("p0000"), pos("zz-dup"));
    assert!(a < p && p < z && z - a == 2);
    assert!(reference.items().windows(2).all(|w| w[0].distance <= w[1].distance));
}

#[test]
fn unreadable_items_are_skipped() {
    let net = trained().ckpt.network::<f32>();
    let seed = build_seed_code(&net, [&class_batch(STRIPES, 2, DEFAULT_GEOMETRY, 1)], CodeSchema::MeanVar).unwrap();
    let gray = ImageBatch::new(Tensor::full([1, 1, 32, 32], 0.5)).unwrap();
    let large = class_batch(SPOTS, 1, Geometry::new(3, 48, 40), 5);
    let items = vec![
        ("ok".to_string(), Ok(class_batch(SPOTS, 1, DEFAULT_GEOMETRY, 4))),
        ("missing".to_string(), Err(Error::Degenerate("no such file".into()))),
        ("gray".to_string(), Ok(gray)),
        ("resized".to_string(), Ok(large)),
    ];
    let ranked = rank_by_distance(&net, &seed, items, CodeSchema::MeanVar).unwrap();
    assert_eq!(ranked.len(), 2);
    let skipped: Vec<&str> = ranked.skipped().iter().map(|s| s.id.as_str()).collect();
    assert_eq!(skipped, ["missing", "gray"]);
    assert!(ranked.rank_of("resized").is_some());
}

#[test]
fn duplicate_ids_are_rejected() {
    let net = trained().ckpt.network::<f32>();
    let seed = build_seed_code(&net, [&class_batch(STRIPES, 2, DEFAULT_GEOMETRY, 1)], CodeSchema::MeanVar).unwrap();
    let img = class_batch(SPOTS, 1, DEFAULT_GEOMETRY, 4);
    let items = vec![("x".to_string(), Ok(img.clone())), ("x".to_string(), Ok(img))];
    assert!(matches!(rank_by_distance(&net, &seed, items, CodeSchema::MeanVar), Err(Error::Config(_))));
}

#[test]
fn seed_images_sit_below_the_pool_median_and_noise_ranks_low() {
    let net = trained().ckpt.network::<f32>();
    let labeled = class_batch(STRIPES, 20, DEFAULT_GEOMETRY, 7);
    let seed = build_seed_code(&net, [&labeled], CodeSchema::MeanVar).unwrap();
    let pool = two_domain(100, DEFAULT_GEOMETRY, 8).images;
    let ranked = rank_by_distance(&net, &seed, corpus(&pool, "u"), CodeSchema::MeanVar).unwrap();
    let d = |i: usize| ranked.items()[i].distance;
    let median = 0.5 * (d(ranked.len() / 2 - 1) + d(ranked.len() / 2));

    let mut items = corpus(&labeled, "seed");
    items.push(("noise".into(), Ok(ImageBatch::new(Tensor::full([1, 3, 32, 32], 0.5)).unwrap())));
    let inserted = rank_by_distance(&net, &seed, items, CodeSchema::MeanVar).unwrap();
    let noise = inserted.items().iter().find(|it| it.id == "noise").unwrap().distance;
    for it in inserted.items().iter().filter(|it| it.id.starts_with("seed")) {
        assert!(it.distance < median, "{} at {} vs median {median}", it.id, it.distance);
        assert!(it.distance < noise);
    }
}

#[test]
fn precision_on_a_small_pool() {
    let net = trained().ckpt.network::<f32>();
    let seed = build_seed_code(&net, [&class_batch(STRIPES, 20, DEFAULT_GEOMETRY, 9)], CodeSchema::MeanVar).unwrap();
    let pool = two_domain(100, DEFAULT_GEOMETRY, 10);
    let ranked = rank_by_distance(&net, &seed, corpus(&pool.images, "u"), CodeSchema::MeanVar).unwrap();
    let labels: HashMap<String, usize> = (0..pool.len()).map(|i| (format!("u{i:04}"), pool.labels[i])).collect();
    assert!(precision_at_k(&ranked, &labels, 50, STRIPES).unwrap() >= 0.8);
    let all_one: HashMap<String, usize> = labels.keys().map(|k| (k.clone(), STRIPES)).collect();
    assert_eq!(precision_at_k(&ranked, &all_one, 17, STRIPES).unwrap(), 1.0);
}

#[test]
fn manifest_corpus_and_csv() {
    let net = trained().ckpt.network::<f32>();
    let seed = build_seed_code(&net, [&class_batch(STRIPES, 4, DEFAULT_GEOMETRY, 1)], CodeSchema::MeanVar).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let imgs = two_domain(3, DEFAULT_GEOMETRY, 4).images;
    let mut manifest = String::from("# id\tpath\tlabel\n");
    for i in 0..imgs.len() {
        save_png(&imgs, i, &dir.path().join(format!("{i}.png"))).unwrap();
        manifest.push_str(&format!("img{i}\t{i}.png\t{}\n", i % 2));
    }
    manifest.push_str("gone\tnot-there.png\n");
    let entries = parse_manifest(&manifest, dir.path()).unwrap();
    let ranked = rank_by_distance(&net, &seed, manifest_corpus(&net, &entries), CodeSchema::MeanVar).unwrap();
    assert_eq!(ranked.len(), 6);
    assert_eq!(ranked.skipped()[0].id, "gone");
    let path = dir.path().join("ranking.csv");
    ranked.save_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,distance,rank");
    assert_eq!(lines.len(), 7);
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], ranked.items()[i].id);
        assert_eq!(fields[1].parse::<f64>().unwrap(), ranked.items()[i].distance);
        assert_eq!(fields[2], (i + 1).to_string());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn selections_are_prefixes(a in 0usize..=30, b in 0usize..=30) {
        let net = trained().ckpt.network::<f32>();
        let seed = build_seed_code(&net, [&class_batch(STRIPES, 2, DEFAULT_GEOMETRY, 1)], CodeSchema::MeanOnly).unwrap();
        let pool = two_domain(15, DEFAULT_GEOMETRY, 6).images;
        let ranked = rank_by_distance(&net, &seed, corpus(&pool, "u"), CodeSchema::MeanOnly).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        let small = select_top(&ranked, lo).unwrap();
        let large = select_top(&ranked, hi).unwrap();
        prop_assert_eq!(&large[..lo], &small[..]);
        prop_assert_eq!(large.len(), hi);
    }
}

#[test]
fn selection_bounds() {
    let net = trained().ckpt.network::<f32>();
    let seed = build_seed_code(&net, [&class_batch(STRIPES, 2, DEFAULT_GEOMETRY, 1)], CodeSchema::MeanVar).unwrap();
    let pool = two_domain(5, DEFAULT_GEOMETRY, 6).images;
    let ranked = rank_by_distance(&net, &seed, corpus(&pool, "u"), CodeSchema::MeanVar).unwrap();
    assert_eq!(select_top(&ranked, 10).unwrap().len(), 10);
    assert!(matches!(select_top(&ranked, 11), Err(Error::Config(_))));
    let _ = SPOTS;
}
