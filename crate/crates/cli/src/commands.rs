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

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use impression::data::procedural::{self, CLASS_NAMES, DEFAULT_GEOMETRY};
use impression::data::{
    grid, load_image, load_images_in_dir, mnist, read_manifest, save_png, Geometry, ImageBatch, LabeledSet,
};
use impression::decoder::{synthesize, LossComponents, SynthesisResult};
use impression::impression::{encode, encode_ensemble, ImpressionCode};
use impression::network::{train_template, Network, NetworkCheckpoint, NetworkSpec};
use impression::retrieval::{build_seed_code, manifest_corpus, rank_by_distance};
use impression::translator::{default_lambda, translate};
use impression::{Error, Result};

use crate::config::{self, required, DatasetKind};

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_net(path: &Path) -> Result<Network<f32>> {
    Ok(NetworkCheckpoint::load(path)?.network())
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Loads an image file, a directory of images, or the images of a manifest,
/// all at `geometry`.
fn load_inputs(input: &Path, geometry: Geometry) -> Result<(Vec<String>, ImageBatch)> {
    if input.is_dir() {
        return load_images_in_dir(input, Some(geometry));
    }
    if is_image(input) {
        let stem = input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        return Ok((vec![stem], load_image(input, Some(geometry))?));
    }
    let entries = read_manifest(input)?;
    if entries.is_empty() {
        return Err(Error::Degenerate(format!("{} lists no images", input.display())));
    }
    let parts = entries
        .iter()
        .map(|e| load_image(&e.path, Some(geometry)))
        .collect::<Result<Vec<_>>>()?;
    Ok((entries.into_iter().map(|e| e.id).collect(), ImageBatch::concat(&parts)?))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn loss_csv(components: &[LossComponents]) -> String {
    let mut s = String::from("iteration,total,impression,content\n");
    for (i, c) in components.iter().enumerate() {
        s.push_str(&format!("{i},{},{},{}\n", c.total, c.impression, c.content));
    }
    s
}

fn write_result(dir: &Path, names: &[String], result: &SynthesisResult) -> Result<()> {
    for (i, name) in names.iter().enumerate() {
        save_png(&result.images, i, &dir.join(format!("{name}.png")))?;
    }
    write_text(&dir.join("loss.csv"), &loss_csv(&result.components))?;
    let mut finals = String::from("image,loss\n");
    for (name, l) in names.iter().zip(&result.final_losses) {
        finals.push_str(&format!("{name},{l}\n"));
    }
    write_text(&dir.join("final.csv"), &finals)
}

pub fn gen_data(cfg: &config::GenDataConfig) -> Result<()> {
    let out = required(&cfg.out_dir, "out_dir")?;
    if cfg.per_class == 0 || cfg.height == 0 || cfg.width == 0 {
        return Err(Error::Config("per_class, height and width must be >= 1".into()));
    }
    let geometry = Geometry::new(3, cfg.height, cfg.width);
    let mut manifest = String::new();
    for (class, name) in CLASS_NAMES.iter().enumerate() {
        let dir = out.join(name);
        create_dir(&dir)?;
        let batch = procedural::class_batch(class, cfg.per_class, geometry, cfg.seed);
        for i in 0..batch.len() {
            let file = format!("{name}/{i:04}.png");
            save_png(&batch, i, &out.join(&file))?;
            manifest.push_str(&format!("{name}-{i:04}\t{file}\t{class}\n"));
        }
    }
    write_text(&out.join("manifest.tsv"), &manifest)?;
    config::write_sidecar(cfg, &out.join("config.json"))?;
    println!("wrote {} images to {}", 2 * cfg.per_class, out.display());
    Ok(())
}

fn manifest_set(path: &Path, geometry: Option<Geometry>, limit: Option<usize>) -> Result<LabeledSet> {
    let mut entries = read_manifest(path)?;
    if let Some(n) = limit {
        entries.truncate(n);
    }
    let mut geometry = geometry;
    let mut parts = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    for e in &entries {
        let label = e
            .label
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{}: entry {:?} has no label", path.display(), e.id)))?;
        labels.push(
            label
                .parse()
                .map_err(|_| Error::Config(format!("{}: label {label:?} is not a class index", path.display())))?,
        );
        let img = load_image(&e.path, geometry)?;
        geometry.get_or_insert(img.geometry());
        parts.push(img);
    }
    if parts.is_empty() {
        return Err(Error::Degenerate(format!("{} lists no images", path.display())));
    }
    LabeledSet::new(path.display().to_string(), ImageBatch::concat(&parts)?, labels)
}

pub fn train(cfg: &config::TrainConfig) -> Result<()> {
    let out = required(&cfg.out, "out")?;
    let (mut train, test) = match cfg.dataset {
        DatasetKind::Procedural => (
            procedural::two_domain(cfg.per_class, DEFAULT_GEOMETRY, cfg.data_seed),
            Some(procedural::two_domain(cfg.test_per_class, DEFAULT_GEOMETRY, cfg.data_seed.wrapping_add(1))),
        ),
        DatasetKind::Mnist => {
            let (train, test) = mnist::load(&mnist::data_dir().join("mnist"))?;
            (train, Some(test))
        }
        DatasetKind::Manifest => {
            let train = manifest_set(&required(&cfg.train_manifest, "train_manifest")?, None, cfg.limit)?;
            let test = cfg
                .test_manifest
                .as_deref()
                .map(|p| manifest_set(p, Some(train.images.geometry()), None))
                .transpose()?;
            (train, test)
        }
    };
    if let (Some(n), DatasetKind::Mnist) = (cfg.limit, cfg.dataset) {
        let n = n.min(train.len());
        let idx: Vec<usize> = (0..n).collect();
        train = LabeledSet::new(train.name.clone(), train.images.select(&idx), train.labels[..n].to_vec())?;
    }
    let classes = train.labels.iter().max().map_or(0, |&m| m + 1).max(2);
    let spec = NetworkSpec::small(train.images.geometry(), classes);
    let lib_cfg = impression::network::TrainConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed: cfg.seed,
        ..Default::default()
    };
    let (ckpt, report) = train_template(&spec, &train, test.as_ref(), &lib_cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    ckpt.save(&out)?;
    config::write_sidecar(cfg, &config::sidecar_for(&out))?;
    let mut report_path = out.as_os_str().to_owned();
    report_path.push(".report.json");
    let report_json = serde_json::json!({
        "fingerprint": ckpt.fingerprint(),
        "report": report,
    });
    write_text(Path::new(&report_path), &(serde_json::to_string_pretty(&report_json).expect("json") + "\n"))?;
    match report.test_accuracy {
        Some(a) => println!("train accuracy {:.4}, test accuracy {a:.4}", report.train_accuracy),
        None => println!("train accuracy {:.4}", report.train_accuracy),
    }
    println!("checkpoint {} ({})", out.display(), ckpt.fingerprint());
    Ok(())
}

pub fn encode_cmd(cfg: &config::EncodeConfig) -> Result<()> {
    let net = load_net(&required(&cfg.net, "net")?)?;
    let input = required(&cfg.input, "input")?;
    let out = required(&cfg.out, "out")?;
    let (_, images) = load_inputs(&input, net.spec().input)?;
    let code = if cfg.ensemble {
        encode_ensemble(&net, [&images], cfg.schema)?
    } else if images.len() == 1 {
        encode(&net, &images, cfg.schema)?
    } else {
        return Err(Error::Config(format!(
            "{} holds {} images; pass --ensemble to pool them into one code",
            input.display(),
            images.len()
        )));
    };
    code.save(&out)?;
    config::write_sidecar(cfg, &config::sidecar_for(&out))?;
    println!("code of {} image(s), dimension {}", code.ensemble_size(), code.dim());
    Ok(())
}

pub fn synth(cfg: &config::SynthConfig) -> Result<()> {
    let net = load_net(&required(&cfg.net, "net")?)?;
    let target = ImpressionCode::load(&required(&cfg.target_code, "target_code")?)?;
    let dir = required(&cfg.out_dir, "out_dir")?;
    let result = synthesize(&net, &target, &cfg.synthesis())?;
    create_dir(&dir)?;
    let names: Vec<String> = (0..result.images.len()).map(|i| format!("synth_{i:03}")).collect();
    write_result(&dir, &names, &result)?;
    config::write_sidecar(cfg, &dir.join("config.json"))?;
    report_losses(&result);
    Ok(())
}

fn report_losses(result: &SynthesisResult) {
    let first = result.loss_trajectory.first().copied().unwrap_or(f64::NAN);
    let last = result.final_losses.iter().sum::<f64>() / result.final_losses.len().max(1) as f64;
    println!("loss {first:.6} -> {last:.6} over {} iterations", result.loss_trajectory.len());
}

pub fn translate_cmd(cfg: &config::TranslateConfig) -> Result<()> {
    let lambda = match (cfg.lambda, cfg.task.as_deref()) {
        (Some(l), _) => l,
        (None, Some(tag)) => default_lambda(tag)?,
        (None, None) => return Err(Error::Config("translate needs --lambda or --task".into())),
    };
    let net = load_net(&required(&cfg.net, "net")?)?;
    let source = required(&cfg.source, "source")?;
    let target = ImpressionCode::load(&required(&cfg.target_code, "target_code")?)?;
    let dir = required(&cfg.out_dir, "out_dir")?;
    let (names, images) = load_inputs(&source, net.spec().input)?;
    let tcfg = impression::translator::TranslateConfig::new(lambda, cfg.synthesis());
    let result = translate(&net, &images, &target, &tcfg)?;
    create_dir(&dir)?;
    write_result(&dir, &names, &result)?;
    let effective = config::TranslateConfig {
        lambda: Some(lambda),
        ..cfg.clone()
    };
    config::write_sidecar(&effective, &dir.join("config.json"))?;
    println!("lambda {lambda}");
    report_losses(&result);
    Ok(())
}

pub fn retrieve(cfg: &config::RetrieveConfig) -> Result<()> {
    let net = load_net(&required(&cfg.net, "net")?)?;
    let seed_path = required(&cfg.seed_images, "seed_images")?;
    let corpus_path = required(&cfg.corpus, "corpus")?;
    let out = required(&cfg.out, "out")?;
    let (_, seeds) = load_inputs(&seed_path, net.spec().input)?;
    let seed = build_seed_code(&net, [&seeds], cfg.schema)?;
    let entries = read_manifest(&corpus_path)?;
    let ranked = rank_by_distance(&net, &seed, manifest_corpus(&net, &entries), cfg.schema)?;
    for s in ranked.skipped() {
        eprintln!("warning: skipped {}: {}", s.id, s.reason);
    }
    let keep = match cfg.n_t {
        Some(n) if n > ranked.len() => {
            eprintln!("warning: n_t {n} exceeds the {} ranked items; writing all", ranked.len());
            ranked.len()
        }
        Some(n) => n,
        None => ranked.len(),
    };
    let mut buf = Vec::new();
    ranked.write_csv(&mut buf).map_err(|e| Error::io(&out, e))?;
    let text = String::from_utf8(buf).expect("utf-8 csv");
    let mut file = fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
    for line in text.lines().take(keep + 1) {
        writeln!(file, "{line}").map_err(|e| Error::io(&out, e))?;
    }
    config::write_sidecar(cfg, &config::sidecar_for(&out))?;
    println!("ranked {} items against {} seed images, wrote {keep}", ranked.len(), ranked.seed_size());
    Ok(())
}

pub fn gridify(cfg: &config::GridifyConfig) -> Result<()> {
    let inputs = required(&cfg.inputs, "inputs")?;
    let out: PathBuf = required(&cfg.out, "out")?;
    let (_, images) = load_images_in_dir(&inputs, None)?;
    save_png(&grid(&images, cfg.cols, cfg.pad)?, 0, &out)?;
    config::write_sidecar(cfg, &config::sidecar_for(&out))
}
