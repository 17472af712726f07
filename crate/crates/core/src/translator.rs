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

//! Unpaired translation in impression space.
//!
//! Source images are pushed toward a target domain's ensembled code while a
//! pixel-space term keeps them anchored to where they started:
//!
//! ```text
//! L = 1/2 |z(x) - z_t|^2 + lambda/2 |x - x_s|^2
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ImageBatch;
use crate::decoder::{optimize, Anchor, SynthesisConfig, SynthesisResult};
use crate::error::{Error, Result};
use crate::impression::ImpressionCode;
use crate::network::Network;
use crate::real::Real;

/// Content-regularization coefficients for the documented translation tasks.
pub const TASK_LAMBDAS: [(&str, f64); 8] = [
    ("apple2orange", 5e-5),
    ("orange2apple", 1e-5),
    ("horse2zebra", 5e-5),
    ("zebra2horse", 2e-5),
    ("summer2winter", 8e-6),
    ("winter2summer", 8e-6),
    ("glass2noglass", 5e-5),
    ("noglass2glass", 2e-5),
];

/// Looks up the default `lambda` of a task tag.
///
/// `"custom"` is accepted as a tag but carries no value; callers must supply
/// `lambda` explicitly for it.
pub fn default_lambda(tag: &str) -> Result<f64> {
    if let Some((_, l)) = TASK_LAMBDAS.iter().find(|(t, _)| *t == tag) {
        return Ok(*l);
    }
    if tag == "custom" {
        return Err(Error::Config("task \"custom\" has no default lambda; pass it explicitly".into()));
    }
    let known: Vec<&str> = TASK_LAMBDAS.iter().map(|(t, _)| *t).chain(["custom"]).collect();
    Err(Error::UnknownTask {
        tag: tag.to_string(),
        known: known.join(", "),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateConfig {
    pub lambda: f64,
    pub synthesis: SynthesisConfig,
}

impl TranslateConfig {
    pub fn new(lambda: f64, synthesis: SynthesisConfig) -> Self {
        TranslateConfig { lambda, synthesis }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        self.synthesis.validate()
    }
}

/// Translates `source` toward `target`. The optimization starts at the
/// source pixels; `cfg.synthesis.batch_size` is ignored in favour of the
/// source batch size.
pub fn translate<T: Real>(
    net: &Network<T>,
    source: &ImageBatch,
    target: &ImpressionCode,
    cfg: &TranslateConfig,
) -> Result<SynthesisResult> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::Contract("translate needs at least one source image".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.synthesis.seed);
    let anchor = Anchor {
        source,
        lambda: cfg.lambda,
    };
    optimize(net, target, &cfg.synthesis, source, &mut rng, Some(anchor))
}
