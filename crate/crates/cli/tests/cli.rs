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

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use impression::data::load_image;
use impression::decoder::synthesize;
use impression::impression::{encode, CodeSchema, ImpressionCode};
use impression::network::NetworkCheckpoint;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impression"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn impression")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], code: i32, category: &str) {
    let out = run(dir, args);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {stderr}");
    let line = stderr.lines().last().unwrap_or_default();
    assert!(line.starts_with(&format!("error[{category}]: ")), "{line}");
}

/// A workspace with a small dataset, a trained template and one code.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self) -> &Path {
        self.dir.path()
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let p = dir.path();
        ok(p, &["gen-data", "--out-dir", "data", "--per-class", "12"]);
        ok(p, &["train-template", "--per-class", "150", "--test-per-class", "20", "--epochs", "1", "--out", "net.impr"]);
        ok(p, &["encode", "--net", "net.impr", "--input", "data/stripes/0000.png", "--out", "one.json"]);
        ok(p, &["encode", "--net", "net.impr", "--input", "data/spots", "--ensemble", "--out", "spots.json"]);
        Fixture { dir }
    })
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn sidecar(p: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&read(p)).unwrap()
}

const SMALL_SYNTH: [&str; 9] = ["synth", "--net", "net.impr", "--target-code", "one.json", "--iters", "15", "--batch", "3"];

#[test]
fn configuration_errors_exit_2() {
    let p = fixture().path();
    fails_with(p, &["synth", "--target-code", "one.json", "--out-dir", "x"], 2, "config");
    fails_with(
        p,
        &["translate", "--net", "net.impr", "--source", "data/stripes", "--target-code", "spots.json", "--out-dir", "x"],
        2,
        "config",
    );
    fails_with(
        p,
        &["translate", "--net", "net.impr", "--source", "data/stripes", "--target-code", "spots.json", "--task", "cats2dogs", "--out-dir", "x"],
        2,
        "config",
    );
    fails_with(p, &["encode", "--net", "net.impr", "--input", "data/spots", "--out", "x.json"], 2, "config");
    std::fs::write(p.join("bad.json"), r#"{"iters": 3, "bogus": 1}"#).unwrap();
    fails_with(p, &["synth", "--config", "bad.json"], 2, "config");
}

#[test]
fn io_errors_exit_3() {
    let p = fixture().path();
    fails_with(p, &["synth", "--net", "missing.impr", "--target-code", "one.json", "--out-dir", "x"], 3, "io");
    std::fs::write(p.join("garbage.impr"), b"not a checkpoint").unwrap();
    fails_with(p, &["synth", "--net", "garbage.impr", "--target-code", "one.json", "--out-dir", "x"], 3, "io");
}

#[test]
fn foreign_code_exits_4() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    ok(p, &["train-template", "--per-class", "20", "--test-per-class", "5", "--epochs", "1", "--seed", "9", "--out", "other.impr"]);
    let code = f.path().join("one.json");
    fails_with(
        p,
        &["synth", "--net", "other.impr", "--target-code", code.to_str().unwrap(), "--out-dir", "x", "--iters", "2"],
        4,
        "incompatibility",
    );
}

#[test]
fn diverging_training_exits_5() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["train-template", "--per-class", "20", "--epochs", "1", "--lr", "1e30", "--out", "n.impr"]);
    assert_eq!(out.status.code(), Some(5));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[numeric]: ") && stderr.contains("learning rate"), "{stderr}");
    assert_eq!(stderr.lines().count(), 1);
}

#[test]
fn synth_writes_images_losses_and_config() {
    let p = fixture().path();
    ok(p, &[&SMALL_SYNTH[..], &["--out-dir", "synth_a"]].concat());
    for i in 0..3 {
        assert!(p.join(format!("synth_a/synth_{i:03}.png")).is_file());
    }
    let csv = String::from_utf8(read(p.join("synth_a/loss.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,total,impression,content"));
    assert_eq!(lines.count(), 15);
    let cfg = sidecar(p.join("synth_a/config.json"));
    assert_eq!(cfg["iters"], 15);
    assert_eq!(cfg["batch"], 3);
    assert_eq!(cfg["lr"], 0.1);
}

#[test]
fn reruns_are_bit_identical() {
    let p = fixture().path();
    ok(p, &[&SMALL_SYNTH[..], &["--out-dir", "rerun_a"]].concat());
    ok(p, &[&SMALL_SYNTH[..], &["--out-dir", "rerun_b"]].concat());
    for f in ["synth_000.png", "synth_002.png", "loss.csv", "final.csv"] {
        assert_eq!(read(p.join("rerun_a").join(f)), read(p.join("rerun_b").join(f)), "{f}");
    }
}

#[test]
fn sidecar_reproduces_the_run() {
    let p = fixture().path();
    ok(p, &[&SMALL_SYNTH[..], &["--seed", "4", "--shift", "2", "--out-dir", "orig"]].concat());
    ok(p, &["synth", "--config", "orig/config.json", "--out-dir", "again"]);
    for f in ["synth_000.png", "synth_001.png", "loss.csv"] {
        assert_eq!(read(p.join("orig").join(f)), read(p.join("again").join(f)), "{f}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let p = fixture().path();
    std::fs::write(
        p.join("base.json"),
        r#"{"net": "net.impr", "target_code": "one.json", "iters": 9, "batch": 2, "lr": 0.05}"#,
    )
    .unwrap();
    ok(p, &["synth", "--config", "base.json", "--iters", "4", "--out-dir", "ovr"]);
    let cfg = sidecar(p.join("ovr/config.json"));
    assert_eq!(cfg["iters"], 4);
    assert_eq!(cfg["batch"], 2);
    assert_eq!(cfg["lr"], 0.05);
    assert_eq!(cfg["beta1"], 0.5);
}

#[test]
fn task_tag_supplies_lambda_and_flag_wins() {
    let p = fixture().path();
    let base = ["translate", "--net", "net.impr", "--source", "data/stripes", "--target-code", "spots.json", "--iters", "2"];
    ok(p, &[&base[..], &["--task", "summer2winter", "--out-dir", "tr_task"]].concat());
    assert_eq!(sidecar(p.join("tr_task/config.json"))["lambda"], 8e-6);
    assert!(p.join("tr_task/0000.png").is_file());
    ok(p, &[&base[..], &["--task", "summer2winter", "--lambda", "0.25", "--out-dir", "tr_flag"]].concat());
    assert_eq!(sidecar(p.join("tr_flag/config.json"))["lambda"], 0.25);
}

#[test]
fn retrieve_truncates_to_n_t_and_warns_past_the_end() {
    let p = fixture().path();
    std::fs::write(p.join("seed.tsv"), "s\tdata/stripes/0003.png\n").unwrap();
    ok(p, &["retrieve", "--net", "net.impr", "--seed-images", "seed.tsv", "--corpus", "data/manifest.tsv", "--n-t", "4", "--out", "r4.csv"]);
    let csv = String::from_utf8(read(p.join("r4.csv"))).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("stripes-0003,"), "{}", rows[1]);

    let out = run(p, &["retrieve", "--net", "net.impr", "--seed-images", "seed.tsv", "--corpus", "data/manifest.tsv", "--n-t", "999", "--out", "rall.csv"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: n_t 999"));
    assert_eq!(String::from_utf8(read(p.join("rall.csv"))).unwrap().lines().count(), 25);
}

#[test]
fn cli_matches_the_library_pipeline() {
    let p = fixture().path();
    let ckpt = NetworkCheckpoint::load(&p.join("net.impr")).unwrap();
    let net = ckpt.network::<f32>();
    let img = load_image(&p.join("data/stripes/0000.png"), Some(net.spec().input)).unwrap();
    let code = encode(&net, &img, CodeSchema::MeanVar).unwrap();
    assert_eq!(code, ImpressionCode::load(&p.join("one.json")).unwrap());

    ok(p, &[&SMALL_SYNTH[..], &["--out-dir", "lib_cmp"]].concat());
    let mut cfg = impression::decoder::SynthesisConfig::default();
    cfg.iterations = 15;
    cfg.batch_size = 3;
    let lib = synthesize(&net, &code, &cfg).unwrap();
    for i in 0..3 {
        let png = load_image(&p.join(format!("lib_cmp/synth_{i:03}.png")), None).unwrap();
        let quantized: Vec<f32> = lib
            .images
            .pixels_of(i)
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
            .collect();
        assert_eq!(png.data(), quantized.as_slice(), "image {i}");
    }
}

#[test]
fn gridify_tiles_a_directory() {
    let p = fixture().path();
    ok(p, &["gridify", "--inputs", "data/spots", "--cols", "4", "--pad", "1", "--out", "grid.png"]);
    let g = load_image(&p.join("grid.png"), None).unwrap().geometry();
    assert_eq!((g.height, g.width), (3 * 32 + 2, 4 * 32 + 3));
}
