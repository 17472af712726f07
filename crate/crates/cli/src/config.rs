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

//! Effective run configurations. Every command reads an optional JSON file
//! (`--config`), overlays the flags that were given, and records the result
//! next to its outputs.

use std::path::{Path, PathBuf};

use impression::adam::AdamConfig;
use impression::decoder::{Augmentation, MatchingMode, SynthesisConfig};
use impression::impression::CodeSchema;
use impression::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Loads `path` (or the defaults) and lets `overlay` apply the flags.
pub fn resolve<C: DeserializeOwned + Default>(path: Option<&Path>, overlay: impl FnOnce(&mut C)) -> Result<C> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => C::default(),
    };
    overlay(&mut cfg);
    Ok(cfg)
}

pub fn write_sidecar<C: Serialize>(cfg: &C, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// `out.ext` -> `out.ext.config.json`
pub fn sidecar_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

pub fn required<T: Clone>(value: &Option<T>, key: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::Config(format!("missing required setting `{key}` (flag or config file)")))
}

/// Copies every `Some` flag onto the config field of the same name.
#[macro_export]
macro_rules! overlay {
    ($cfg:ident, $args:expr; $($field:ident),* $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = v.into(); } )*
    };
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub out_dir: Option<PathBuf>,
    pub per_class: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            out_dir: None,
            per_class: 100,
            seed: 0,
            height: 32,
            width: 32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Procedural,
    Mnist,
    Manifest,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetKind,
    pub train_manifest: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    /// Procedural images per class.
    pub per_class: usize,
    pub test_per_class: usize,
    pub data_seed: u64,
    /// Use at most this many training images (MNIST or manifest).
    pub limit: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let t = impression::network::TrainConfig::default();
        TrainConfig {
            dataset: DatasetKind::Procedural,
            train_manifest: None,
            test_manifest: None,
            per_class: 500,
            test_per_class: 200,
            data_seed: 1,
            limit: None,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed: t.seed,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub net: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub schema: CodeSchema,
    pub ensemble: bool,
    pub out: Option<PathBuf>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            net: None,
            input: None,
            schema: CodeSchema::MeanVar,
            ensemble: false,
            out: None,
        }
    }
}

/// Declares a config struct carrying the decoder settings shared by
/// `synth` and `translate` after its own fields.
macro_rules! decoder_config {
    ($(#[$doc:meta])* $name:ident { $($field:ident: $ty:ty),* $(,)? }) => {
        $(#[$doc])*
        #[derive(Clone, Debug, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $(pub $field: $ty,)*
            pub batch: usize,
            pub iters: usize,
            pub lr: f64,
            pub beta1: f64,
            pub beta2: f64,
            pub mode: MatchingMode,
            pub shift: usize,
            pub flip: f64,
            pub seed: u64,
        }

        impl Default for $name {
            fn default() -> Self {
                let s = SynthesisConfig::default();
                $name {
                    $($field: Default::default(),)*
                    batch: s.batch_size,
                    iters: s.iterations,
                    lr: s.adam.lr,
                    beta1: s.adam.beta1,
                    beta2: s.adam.beta2,
                    mode: s.mode,
                    shift: s.augmentation.shift,
                    flip: s.augmentation.flip_probability,
                    seed: s.seed,
                }
            }
        }

        impl $name {
            pub fn synthesis(&self) -> SynthesisConfig {
                SynthesisConfig {
                    iterations: self.iters,
                    batch_size: self.batch,
                    adam: AdamConfig {
                        lr: self.lr,
                        beta1: self.beta1,
                        beta2: self.beta2,
                        ..AdamConfig::default()
                    },
                    augmentation: Augmentation {
                        shift: self.shift,
                        flip_probability: self.flip,
                    },
                    mode: self.mode,
                    seed: self.seed,
                    ..SynthesisConfig::default()
                }
            }
        }
    };
}

decoder_config!(SynthConfig {
    net: Option<PathBuf>,
    target_code: Option<PathBuf>,
    out_dir: Option<PathBuf>,
});

decoder_config!(TranslateConfig {
    net: Option<PathBuf>,
    source: Option<PathBuf>,
    target_code: Option<PathBuf>,
    lambda: Option<f64>,
    task: Option<String>,
    out_dir: Option<PathBuf>,
});

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieveConfig {
    pub net: Option<PathBuf>,
    pub seed_images: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub n_t: Option<usize>,
    pub schema: CodeSchema,
    pub out: Option<PathBuf>,
}

impl Default for RetrieveConfig {
    fn default() -> Self {
        RetrieveConfig {
            net: None,
            seed_images: None,
            corpus: None,
            n_t: None,
            schema: CodeSchema::MeanVar,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridifyConfig {
    pub inputs: Option<PathBuf>,
    pub cols: usize,
    pub pad: usize,
    pub out: Option<PathBuf>,
}

impl Default for GridifyConfig {
    fn default() -> Self {
        GridifyConfig {
            inputs: None,
            cols: 8,
            pad: 2,
            out: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoder_defaults() {
        let s = SynthConfig::default();
        assert_eq!((s.batch, s.iters, s.lr, s.beta1, s.beta2), (32, 2000, 0.1, 0.5, 0.9));
        assert_eq!((s.shift, s.flip, s.mode), (4, 0.5, MatchingMode::PerImage));
        assert_eq!(s.synthesis(), SynthesisConfig::default());
    }

    #[test]
    fn empty_file_means_defaults() {
        let cfg: TranslateConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.lambda, None);
        assert_eq!(cfg.iters, 2000);
    }

    #[test]
    fn sidecar_name_appends() {
        assert_eq!(sidecar_for(Path::new("out/code.json")), PathBuf::from("out/code.json.config.json"));
    }
}
