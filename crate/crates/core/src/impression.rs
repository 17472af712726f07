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

//! Impression codes: per-channel activation statistics at the tap points.
//!
//! A single image is encoded by spatially averaging every tapped channel
//! (and, depending on the [`CodeSchema`], taking its spatial variance). A set
//! of images is encoded jointly, batch-normalization style: each channel is
//! reduced over every sample and every spatial position at once, so features
//! that recur across the set dominate the code.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ImageBatch;
use crate::error::{Error, Result};
use crate::network::{Fingerprint, Network, Pass};
use crate::real::Real;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Which statistics enter a code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeSchema {
    #[serde(rename = "mean")]
    MeanOnly,
    #[serde(rename = "var")]
    VarOnly,
    #[serde(rename = "meanvar")]
    MeanVar,
}

impl CodeSchema {
    pub fn has_mean(self) -> bool {
        matches!(self, CodeSchema::MeanOnly | CodeSchema::MeanVar)
    }

    pub fn has_var(self) -> bool {
        matches!(self, CodeSchema::VarOnly | CodeSchema::MeanVar)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CodeSchema::MeanOnly => "mean",
            CodeSchema::VarOnly => "var",
            CodeSchema::MeanVar => "meanvar",
        }
    }
}

impl std::str::FromStr for CodeSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(CodeSchema::MeanOnly),
            "var" => Ok(CodeSchema::VarOnly),
            "meanvar" => Ok(CodeSchema::MeanVar),
            other => Err(Error::Parse(format!(
                "unknown code schema {other:?} (expected mean, var or meanvar)"
            ))),
        }
    }
}

impl std::fmt::Display for CodeSchema {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Statistics of one tap point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapCode {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<Vec<f64>>,
}

impl TapCode {
    pub fn channels(&self) -> usize {
        self.mean.as_ref().or(self.var.as_ref()).map_or(0, Vec::len)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpressionCode {
    schema: CodeSchema,
    fingerprint: Fingerprint,
    ensemble_size: usize,
    taps: Vec<TapCode>,
}

impl ImpressionCode {
    /// Validates that the entries present match `schema`, every tap has a
    /// consistent channel count, and all variances are non-negative.
    pub fn new(schema: CodeSchema, fingerprint: Fingerprint, ensemble_size: usize, taps: Vec<TapCode>) -> Result<Self> {
        let code = ImpressionCode {
            schema,
            fingerprint,
            ensemble_size,
            taps,
        };
        code.validate()?;
        Ok(code)
    }

    fn validate(&self) -> Result<()> {
        if self.ensemble_size == 0 {
            return Err(Error::Invariant("ensemble_size must be >= 1".into()));
        }
        if self.taps.is_empty() {
            return Err(Error::Invariant("a code needs at least one tap".into()));
        }
        for t in &self.taps {
            if t.mean.is_some() != self.schema.has_mean() || t.var.is_some() != self.schema.has_var() {
                return Err(Error::Invariant(format!(
                    "tap {:?} entries do not match schema {}",
                    t.name, self.schema
                )));
            }
            if let (Some(m), Some(v)) = (&t.mean, &t.var) {
                if m.len() != v.len() {
                    return Err(Error::Invariant(format!("tap {:?} has {} means but {} variances", t.name, m.len(), v.len())));
                }
            }
            if t.channels() == 0 {
                return Err(Error::Invariant(format!("tap {:?} has no channels", t.name)));
            }
            let values = t.mean.iter().chain(&t.var).flatten();
            if values.clone().any(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!("tap {:?} holds a non-finite value", t.name)));
            }
            if let Some(bad) = t.var.iter().flatten().find(|v| **v < 0.0) {
                return Err(Error::Invariant(format!("tap {:?} has negative variance {bad}", t.name)));
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> CodeSchema {
        self.schema
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size
    }

    pub fn taps(&self) -> &[TapCode] {
        &self.taps
    }

    /// Total tapped channel count K.
    pub fn channels(&self) -> usize {
        self.taps.iter().map(TapCode::channels).sum()
    }

    /// Length of the flattened code: K, or 2K for mean+variance.
    pub fn dim(&self) -> usize {
        self.flatten().len()
    }

    /// Code vector: per tap, the means followed by the variances.
    pub fn flatten(&self) -> Vec<f64> {
        self.taps
            .iter()
            .flat_map(|t| t.mean.iter().chain(&t.var).flatten().copied())
            .collect()
    }

    /// Drops the statistics `schema` does not use. Only narrowing is possible.
    pub fn restrict(&self, schema: CodeSchema) -> Result<ImpressionCode> {
        if (schema.has_mean() && !self.schema.has_mean()) || (schema.has_var() && !self.schema.has_var()) {
            return Err(Error::Incompatible {
                field: "schema",
                left: self.schema.to_string(),
                right: schema.to_string(),
            });
        }
        let taps = self
            .taps
            .iter()
            .map(|t| TapCode {
                name: t.name.clone(),
                mean: t.mean.clone().filter(|_| schema.has_mean()),
                var: t.var.clone().filter(|_| schema.has_var()),
            })
            .collect();
        ImpressionCode::new(schema, self.fingerprint, self.ensemble_size, taps)
    }

    /// Errors unless both codes share schema, network and tap structure.
    pub fn check_compatible(&self, other: &ImpressionCode) -> Result<()> {
        if self.schema != other.schema {
            return Err(Error::Incompatible {
                field: "schema",
                left: self.schema.to_string(),
                right: other.schema.to_string(),
            });
        }
        if self.fingerprint != other.fingerprint {
            return Err(Error::Incompatible {
                field: "network fingerprint",
                left: self.fingerprint.to_hex(),
                right: other.fingerprint.to_hex(),
            });
        }
        let shape = |c: &ImpressionCode| {
            c.taps
                .iter()
                .map(|t| format!("{}[{}]", t.name, t.channels()))
                .collect::<Vec<_>>()
                .join(",")
        };
        let (a, b) = (shape(self), shape(other));
        if a != b {
            return Err(Error::Incompatible {
                field: "tap structure",
                left: a,
                right: b,
            });
        }
        Ok(())
    }

    /// Errors unless the code was produced by `net` with its tap layout.
    pub fn check_network<T: Real>(&self, net: &Network<T>) -> Result<()> {
        if self.fingerprint != net.fingerprint() {
            return Err(Error::Incompatible {
                field: "network fingerprint",
                left: self.fingerprint.to_hex(),
                right: net.fingerprint().to_hex(),
            });
        }
        let spec = net.spec();
        let names = spec.tap_names();
        let shapes = spec.tap_shapes()?;
        let ok = self.taps.len() == names.len()
            && self
                .taps
                .iter()
                .zip(names.iter().zip(&shapes))
                .all(|(t, (n, g))| t.name == *n && t.channels() == g.channels);
        if !ok {
            return Err(Error::Incompatible {
                field: "tap structure",
                left: format!("{:?}", self.taps.iter().map(|t| &t.name).collect::<Vec<_>>()),
                right: format!("{names:?}"),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("code serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let code: ImpressionCode =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("impression code: {e}")))?;
        code.validate()?;
        Ok(code)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Euclidean distance between two compatible codes.
pub fn distance(a: &ImpressionCode, b: &ImpressionCode) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Per-sample `(mean, var)` of every channel of an `N x C x H x W` tensor,
/// each laid out `[N][C]`. Two-pass, accumulated in `f64`.
pub(crate) fn sample_stats<T: Real>(t: &Tensor<T>) -> (Vec<f64>, Vec<f64>) {
    let [n, c, h, w] = t.dims4("sample_stats").expect("tap activations are rank 4");
    let plane = h * w;
    let mut means = Vec::with_capacity(n * c);
    let mut vars = Vec::with_capacity(n * c);
    for chunk in t.data().chunks(plane.max(1)).take(n * c) {
        let m = chunk.iter().map(|v| v.f64()).sum::<f64>() / plane as f64;
        let v = chunk.iter().map(|x| (x.f64() - m).powi(2)).sum::<f64>() / plane as f64;
        means.push(m);
        vars.push(v);
    }
    (means, vars)
}

/// Encodes every image of `images` separately.
pub fn encode_each<T: Real>(net: &Network<T>, images: &ImageBatch, schema: CodeSchema) -> Result<Vec<ImpressionCode>> {
    let mut tape = Tape::new();
    let x = tape.constant(images.cast());
    let fwd = net.forward(&mut tape, x, Pass::TapsOnly)?;
    let mut per_image: Vec<Vec<TapCode>> = vec![Vec::with_capacity(fwd.taps.len()); images.len()];
    for (name, var) in &fwd.taps {
        let act = tape.value(*var);
        let c = act.shape()[1];
        let (means, vars) = sample_stats(act);
        for (i, taps) in per_image.iter_mut().enumerate() {
            taps.push(TapCode {
                name: name.clone(),
                mean: schema.has_mean().then(|| means[i * c..(i + 1) * c].to_vec()),
                var: schema.has_var().then(|| vars[i * c..(i + 1) * c].to_vec()),
            });
        }
    }
    per_image
        .into_iter()
        .map(|taps| ImpressionCode::new(schema, net.fingerprint(), 1, taps))
        .collect()
}

/// Encodes a single image.
pub fn encode<T: Real>(net: &Network<T>, image: &ImageBatch, schema: CodeSchema) -> Result<ImpressionCode> {
    if image.len() != 1 {
        return Err(Error::Contract(format!("encode takes one image, got {}", image.len())));
    }
    Ok(encode_each(net, image, schema)?.remove(0))
}

/// Streaming sufficient statistics (count, sum, sum of squares) per tapped
/// channel. Partial accumulators over disjoint parts of a dataset can be
/// merged in any order.
#[derive(Clone, Debug)]
pub struct EnsembleAccumulator {
    schema: CodeSchema,
    fingerprint: Fingerprint,
    names: Vec<String>,
    images: usize,
    counts: Vec<u64>,
    sums: Vec<Vec<f64>>,
    sumsqs: Vec<Vec<f64>>,
}

impl EnsembleAccumulator {
    pub fn new<T: Real>(net: &Network<T>, schema: CodeSchema) -> Result<Self> {
        let shapes = net.spec().tap_shapes()?;
        Ok(EnsembleAccumulator {
            schema,
            fingerprint: net.fingerprint(),
            names: net.spec().tap_names(),
            images: 0,
            counts: vec![0; shapes.len()],
            sums: shapes.iter().map(|g| vec![0.0; g.channels]).collect(),
            sumsqs: shapes.iter().map(|g| vec![0.0; g.channels]).collect(),
        })
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn add_batch<T: Real>(&mut self, net: &Network<T>, batch: &ImageBatch) -> Result<()> {
        if net.fingerprint() != self.fingerprint {
            return Err(Error::Incompatible {
                field: "network fingerprint",
                left: self.fingerprint.to_hex(),
                right: net.fingerprint().to_hex(),
            });
        }
        if batch.is_empty() {
            return Ok(());
        }
        let mut tape = Tape::new();
        let x = tape.constant(batch.cast());
        let fwd = net.forward(&mut tape, x, Pass::TapsOnly)?;
        for (t, (_, var)) in fwd.taps.iter().enumerate() {
            let act = tape.value(*var);
            let [n, c, h, w] = act.dims4("ensemble")?;
            let plane = h * w;
            for (j, chunk) in act.data().chunks(plane).enumerate() {
                let ch = j % c;
                let (mut s, mut sq) = (0.0f64, 0.0f64);
                for &v in chunk {
                    let v = v.f64();
                    s += v;
                    sq += v * v;
                }
                self.sums[t][ch] += s;
                self.sumsqs[t][ch] += sq;
            }
            self.counts[t] += (n * plane) as u64;
        }
        self.images += batch.len();
        Ok(())
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) -> Result<()> {
        if other.fingerprint != self.fingerprint || other.schema != self.schema || other.names != self.names {
            return Err(Error::Incompatible {
                field: "ensemble accumulator",
                left: format!("{} {}", self.fingerprint, self.schema),
                right: format!("{} {}", other.fingerprint, other.schema),
            });
        }
        self.images += other.images;
        for t in 0..self.counts.len() {
            self.counts[t] += other.counts[t];
            self.sums[t].iter_mut().zip(&other.sums[t]).for_each(|(a, b)| *a += b);
            self.sumsqs[t].iter_mut().zip(&other.sumsqs[t]).for_each(|(a, b)| *a += b);
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<ImpressionCode> {
        if self.images == 0 {
            return Err(Error::Degenerate("ensembled code over an empty dataset".into()));
        }
        let taps = self
            .names
            .iter()
            .enumerate()
            .map(|(t, name)| {
                let count = self.counts[t] as f64;
                let mean: Vec<f64> = self.sums[t].iter().map(|s| s / count).collect();
                let var: Vec<f64> = self.sumsqs[t]
                    .iter()
                    .zip(&mean)
                    .map(|(sq, m)| (sq / count - m * m).max(0.0))
                    .collect();
                TapCode {
                    name: name.clone(),
                    mean: self.schema.has_mean().then_some(mean),
                    var: self.schema.has_var().then_some(var),
                }
            })
            .collect();
        ImpressionCode::new(self.schema, self.fingerprint, self.images, taps)
    }
}

/// Ensembled code of every image in `batches`, reduced per channel over all
/// samples and spatial positions. Batches must share one geometry.
pub fn encode_ensemble<'a, T: Real>(
    net: &Network<T>,
    batches: impl IntoIterator<Item = &'a ImageBatch>,
    schema: CodeSchema,
) -> Result<ImpressionCode> {
    let mut acc = EnsembleAccumulator::new(net, schema)?;
    let mut geometry = None;
    for b in batches {
        if b.is_empty() {
            continue;
        }
        match geometry {
            None => geometry = Some(b.geometry()),
            Some(g) if g != b.geometry() => {
                return Err(Error::dim("encode_ensemble (mixed geometries)", &g.shape(1), &b.geometry().shape(1)))
            }
            _ => {}
        }
        acc.add_batch(net, b)?;
    }
    acc.finish()
}
