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

//! Ranking unlabeled data by impression distance to a labeled seed set.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use crate::data::{load_image, resize_bilinear, ImageBatch, ManifestEntry};
use crate::error::{Error, Result};
use crate::impression::{distance, encode_each, encode_ensemble, CodeSchema, ImpressionCode};
use crate::network::Network;
use crate::real::Real;
use crate::tensor::Tensor;

/// Corpus items are encoded in chunks of this many images.
const CHUNK: usize = 64;

/// Ensembles the labeled images into one seed code.
pub fn build_seed_code<'a, T: Real>(
    net: &Network<T>,
    labeled: impl IntoIterator<Item = &'a ImageBatch>,
    schema: CodeSchema,
) -> Result<ImpressionCode> {
    encode_ensemble(net, labeled, schema)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedItem {
    pub id: String,
    pub distance: f64,
}

/// A corpus item that could not be ranked.
#[derive(Clone, Debug, PartialEq)]
pub struct Skipped {
    pub id: String,
    pub reason: String,
}

/// Corpus items sorted by ascending distance to a seed code, ties broken by
/// id.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedCorpus {
    items: Vec<RankedItem>,
    skipped: Vec<Skipped>,
    seed_size: usize,
}

impl RankedCorpus {
    pub fn items(&self) -> &[RankedItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn skipped(&self) -> &[Skipped] {
        &self.skipped
    }

    /// Number of labeled images behind the seed code.
    pub fn seed_size(&self) -> usize {
        self.seed_size
    }

    /// Zero-based rank of `id`, if it was ranked.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    /// Writes `id,distance,rank` rows with one-based ranks.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "id,distance,rank")?;
        for (i, it) in self.items.iter().enumerate() {
            writeln!(out, "{},{},{}", csv_field(&it.id), it.distance, i + 1)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Brings a single image to the template geometry. Spatial size is fixed by
/// bilinear resizing; a channel mismatch is an error.
fn conform<T: Real>(net: &Network<T>, img: ImageBatch) -> Result<ImageBatch> {
    let want = net.spec().input;
    let got = img.geometry();
    if img.len() != 1 {
        return Err(Error::Contract(format!("corpus items are single images, got {}", img.len())));
    }
    if got == want {
        return Ok(img);
    }
    if got.channels != want.channels {
        return Err(Error::dim("corpus item", &want.shape(1), &got.shape(1)));
    }
    let pixels = resize_bilinear(img.data(), got, want.height, want.width);
    ImageBatch::new(Tensor::new(want.shape(1), pixels)?)
}

/// Encodes each corpus item on its own and ranks it by distance to `seed`.
///
/// Items that fail to load or encode are left out and reported in
/// [`RankedCorpus::skipped`]. Duplicate ids are an error.
pub fn rank_by_distance<T: Real>(
    net: &Network<T>,
    seed: &ImpressionCode,
    corpus: impl IntoIterator<Item = (String, Result<ImageBatch>)>,
    schema: CodeSchema,
) -> Result<RankedCorpus> {
    seed.check_network(net)?;
    let seed = seed.restrict(schema)?;
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    let mut pending: Vec<(String, ImageBatch)> = Vec::with_capacity(CHUNK);

    let flush = |pending: &mut Vec<(String, ImageBatch)>, items: &mut Vec<RankedItem>| -> Result<()> {
        if pending.is_empty() {
            return Ok(());
        }
        let parts: Vec<ImageBatch> = pending.iter().map(|(_, b)| b.clone()).collect();
        let codes = encode_each(net, &ImageBatch::concat(&parts)?, schema)?;
        for ((id, _), code) in pending.drain(..).zip(codes) {
            items.push(RankedItem {
                id,
                distance: distance(&code, &seed)?,
            });
        }
        Ok(())
    };

    for (id, item) in corpus {
        if !seen.insert(id.clone()) {
            return Err(Error::Config(format!("duplicate corpus id {id:?}")));
        }
        match item.and_then(|img| conform(net, img)) {
            Ok(img) => pending.push((id, img)),
            Err(e) => skipped.push(Skipped {
                id,
                reason: e.to_string(),
            }),
        }
        if pending.len() == CHUNK {
            flush(&mut pending, &mut items)?;
        }
    }
    flush(&mut pending, &mut items)?;

    items.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    Ok(RankedCorpus {
        items,
        skipped,
        seed_size: seed.ensemble_size(),
    })
}

/// Lazily loads manifest entries at the template geometry, for use with
/// [`rank_by_distance`].
pub fn manifest_corpus<'a, T: Real>(
    net: &Network<T>,
    entries: &'a [ManifestEntry],
) -> impl Iterator<Item = (String, Result<ImageBatch>)> + 'a {
    let geometry = net.spec().input;
    entries
        .iter()
        .map(move |e| (e.id.clone(), load_image(&e.path, Some(geometry))))
}

/// The first `n_t` ids.
pub fn select_top(ranked: &RankedCorpus, n_t: usize) -> Result<Vec<String>> {
    if n_t > ranked.len() {
        return Err(Error::Config(format!(
            "n_t = {n_t} exceeds the ranked corpus size {}",
            ranked.len()
        )));
    }
    Ok(ranked.items[..n_t].iter().map(|it| it.id.clone()).collect())
}

/// Fraction of the top `k` ids labeled `positive`.
pub fn precision_at_k(ranked: &RankedCorpus, labels: &HashMap<String, usize>, k: usize, positive: usize) -> Result<f64> {
    if k == 0 || k > ranked.len() {
        return Err(Error::Config(format!("k = {k} must be in 1..={}", ranked.len())));
    }
    let mut hits = 0usize;
    for it in &ranked.items[..k] {
        let label = labels
            .get(&it.id)
            .ok_or_else(|| Error::Config(format!("no label for corpus id {:?}", it.id)))?;
        hits += usize::from(*label == positive);
    }
    Ok(hits as f64 / k as f64)
}
