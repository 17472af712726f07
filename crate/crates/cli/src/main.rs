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

//! `impression`: train templates, encode images into impression codes, and
//! decode, translate and rank images against those codes.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use impression::decoder::MatchingMode;
use impression::impression::CodeSchema;
use impression::{Category, Error, Result};

use config::DatasetKind;

#[derive(Parser)]
#[command(name = "impression", version, about = "Impression-space encoding, synthesis, translation and retrieval")]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the procedural two-domain dataset as PNGs plus a manifest.
    GenData(GenDataArgs),
    /// Train a template classifier and save its checkpoint.
    TrainTemplate(TrainArgs),
    /// Encode one image, or ensemble many, into an impression code.
    Encode(EncodeArgs),
    /// Synthesize images whose impressions match a target code.
    Synth(SynthArgs),
    /// Translate source images toward a target code.
    Translate(TranslateArgs),
    /// Rank a corpus by impression distance to a labeled seed set.
    Retrieve(RetrieveArgs),
    /// Tile the images of a directory into one PNG.
    Gridify(GridifyArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    dataset: Option<DatasetKind>,
    /// TAB-separated `id, path, label` file (with `--dataset manifest`).
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    /// An image file, a directory of images, or a manifest.
    #[arg(long)]
    input: Option<PathBuf>,
    /// mean, var or meanvar.
    #[arg(long)]
    schema: Option<CodeSchema>,
    /// Ensemble every input image into one code.
    #[arg(long)]
    ensemble: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecoderArgs {
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    /// per-image or ensemble.
    #[arg(long)]
    mode: Option<MatchingMode>,
    /// Jitter in pixels (edge-replicated pad, then random crop).
    #[arg(long)]
    shift: Option<usize>,
    /// Horizontal flip probability.
    #[arg(long)]
    flip: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    #[arg(long)]
    target_code: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    decoder: DecoderArgs,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    /// Directory of source images.
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target_code: Option<PathBuf>,
    /// Content weight; overrides the task default.
    #[arg(long)]
    lambda: Option<f64>,
    /// Task tag such as horse2zebra, used to look up lambda.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    decoder: DecoderArgs,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    net: Option<PathBuf>,
    /// Manifest of the labeled seed images.
    #[arg(long)]
    seed_images: Option<PathBuf>,
    /// Manifest of the corpus to rank.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Keep only the first n_t rows.
    #[arg(long = "n-t")]
    n_t: Option<usize>,
    #[arg(long)]
    schema: Option<CodeSchema>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    inputs: Option<PathBuf>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    pad: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

macro_rules! overlay_decoder {
    ($cfg:ident, $d:expr) => {
        overlay!($cfg, $d; batch, iters, lr, beta1, beta2, mode, shift, flip, seed);
    };
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::GenData(a) => {
            let cfg = config::resolve(a.config.as_deref(), |c: &mut config::GenDataConfig| {
                overlay!(c, a; per_class, seed, height, width);
                if a.out_dir.is_some() {
                    c.out_dir = a.out_dir.clone();
                }
            })?;
            commands::gen_data(&cfg)
        }
        Command::TrainTemplate(a) => {
            let cfg = config::resolve(a.config.as_deref(), |c: &mut config::TrainConfig| {
                overlay!(c, a; dataset, per_class, test_per_class, data_seed, epochs, batch_size, learning_rate, seed);
                for (dst, src) in [
                    (&mut c.train_manifest, &a.train_manifest),
                    (&mut c.test_manifest, &a.test_manifest),
                    (&mut c.out, &a.out),
                ] {
                    if src.is_some() {
                        *dst = src.clone();
                    }
                }
                if a.limit.is_some() {
                    c.limit = a.limit;
                }
            })?;
            commands::train(&cfg)
        }
        Command::Encode(a) => {
            let cfg = config::resolve(a.config.as_deref(), |c: &mut config::EncodeConfig| {
                overlay!(c, a; schema);
                if a.ensemble {
                    c.ensemble = true;
                }
                for (dst, src) in [(&mut c.net, &a.net), (&mut c.input, &a.input), (&mut c.out, &a.out)] {
                    if src.is_some() {
                        *dst = src.clone();
                    }
                }
            })?;
            commands::encode_cmd(&cfg)
        }
        Command::Synth(a) => {
            let cfg = config::resolve(a.config.as_deref(), |c: &mut config::SynthConfig| {
                overlay_decoder!(c, a.decoder);
                for (dst, src) in [(&mut c.net, &a.net), (&mut c.target_code, &a.target_code), (&mut c.out_dir, &a.out_dir)] {
                    if src.is_some() {
                        *dst = src.clone();
                    }
                }
            })?;
            commands::synth(&cfg)
        }
        Command::Translate(a) => {
            let cfg = config::resolve(a.config.as_deref(), |c: &mut config::TranslateConfig| {
                overlay_decoder!(c, a.decoder);
                for (dst, src) in [
                    (&mut c.net, &a.net),
                    (&mut c.source, &a.source),
                    (&mut c.target_code, &a.target_code),
                    (&mut c.out_dir, &a.out_dir),
                ] {
                    if src.is_some() {
                        *dst = src.clone();
                    }
                }
                if a.task.is_some() {
                    c.task = a.task.clone();
                    // a task given on the command line outranks a file lambda
                    if a.lambda.is_none() {
                        c.lambda = None;
                    }
                }
                if a.lambda.is_some() {
                    c.lambda = a.lambda;
                }
            })?;
            commands::translate_cmd(&cfg)
        }
        Command::Retrieve(a) => {
            let cfg = config::resolve(a.config.as_deref(), |c: &mut config::RetrieveConfig| {
                overlay!(c, a; schema);
                for (dst, src) in [
                    (&mut c.net, &a.net),
                    (&mut c.seed_images, &a.seed_images),
                    (&mut c.corpus, &a.corpus),
                    (&mut c.out, &a.out),
                ] {
                    if src.is_some() {
                        *dst = src.clone();
                    }
                }
                if a.n_t.is_some() {
                    c.n_t = a.n_t;
                }
            })?;
            commands::retrieve(&cfg)
        }
        Command::Gridify(a) => {
            let cfg = config::resolve(a.config.as_deref(), |c: &mut config::GridifyConfig| {
                overlay!(c, a; cols, pad);
                for (dst, src) in [(&mut c.inputs, &a.inputs), (&mut c.out, &a.out)] {
                    if src.is_some() {
                        *dst = src.clone();
                    }
                }
            })?;
            commands::gridify(&cfg)
        }
    }
}

fn exit_code(category: Category) -> u8 {
    match category {
        Category::Config => 2,
        Category::Io => 3,
        Category::Incompatible => 4,
        Category::Numeric => 5,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category().as_str());
            ExitCode::from(exit_code(e.category()))
        }
    }
}
