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

use image::{GrayImage, ImageFormat, RgbImage};

use super::{Geometry, ImageBatch};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

fn image_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Bilinear resampling of one `C x H x W` image with half-pixel centres
/// (`align_corners = false`); source coordinates are clamped to the edge.
pub fn resize_bilinear(pixels: &[f32], from: Geometry, height: usize, width: usize) -> Vec<f32> {
    let src_coord = |dst: usize, inn: usize, out: usize| -> (usize, usize, f32) {
        let s = ((dst as f32 + 0.5) * inn as f32 / out as f32 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(inn - 1);
        let i1 = (i0 + 1).min(inn - 1);
        (i0, i1, s - i0 as f32)
    };
    let mut out = vec![0.0f32; from.channels * height * width];
    for c in 0..from.channels {
        let plane = &pixels[c * from.height * from.width..(c + 1) * from.height * from.width];
        for y in 0..height {
            let (y0, y1, fy) = src_coord(y, from.height, height);
            for x in 0..width {
                let (x0, x1, fx) = src_coord(x, from.width, width);
                let top = plane[y0 * from.width + x0] * (1.0 - fx) + plane[y0 * from.width + x1] * fx;
                let bot = plane[y1 * from.width + x0] * (1.0 - fx) + plane[y1 * from.width + x1] * fx;
                out[(c * height + y) * width + x] = (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0);
            }
        }
    }
    out
}

fn convert_channels(pixels: Vec<f32>, geometry: Geometry, channels: usize) -> Vec<f32> {
    let plane = geometry.height * geometry.width;
    match (geometry.channels, channels) {
        (a, b) if a == b => pixels,
        (1, n) => (0..n).flat_map(|_| pixels.iter().copied()).collect(),
        (3, 1) => (0..plane)
            .map(|i| 0.299 * pixels[i] + 0.587 * pixels[plane + i] + 0.114 * pixels[2 * plane + i])
            .collect(),
        (_, n) => (0..n * plane).map(|i| pixels[i % plane]).collect(),
    }
}

/// Reads an image file as a batch of one. With `target`, the image is
/// converted to the target channel count and bilinearly resized.
pub fn load_image(path: &Path, target: Option<Geometry>) -> Result<ImageBatch> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let gray = target.is_some_and(|g| g.channels == 1);
    let (geometry, pixels) = if gray {
        let im = img.to_luma8();
        let g = Geometry::new(1, im.height() as usize, im.width() as usize);
        (g, im.as_raw().iter().map(|&v| v as f32 / 255.0).collect::<Vec<_>>())
    } else {
        let im = img.to_rgb8();
        let (w, h) = (im.width() as usize, im.height() as usize);
        let raw = im.as_raw();
        let mut chw = vec![0.0f32; 3 * h * w];
        for (i, px) in raw.chunks(3).enumerate() {
            for c in 0..3 {
                chw[c * h * w + i] = px[c] as f32 / 255.0;
            }
        }
        (Geometry::new(3, h, w), chw)
    };
    let (geometry, pixels) = match target {
        Some(t) if t != geometry => {
            let pixels = convert_channels(pixels, geometry, t.channels);
            let g = Geometry::new(t.channels, geometry.height, geometry.width);
            let pixels = if (g.height, g.width) != (t.height, t.width) {
                resize_bilinear(&pixels, g, t.height, t.width)
            } else {
                pixels
            };
            (t, pixels)
        }
        _ => (geometry, pixels),
    };
    ImageBatch::new(Tensor::new(geometry.shape(1), pixels)?)
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Loads every image in `dir` (sorted by file name). Returns the file stems
/// alongside the batch.
pub fn load_images_in_dir(dir: &Path, target: Option<Geometry>) -> Result<(Vec<String>, ImageBatch)> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(Error::Degenerate(format!("no images found in {}", dir.display())));
    }
    let mut names = Vec::with_capacity(paths.len());
    let mut parts = Vec::with_capacity(paths.len());
    let mut target = target;
    for p in &paths {
        let img = load_image(p, target)?;
        target.get_or_insert(img.geometry());
        names.push(p.file_stem().unwrap_or_default().to_string_lossy().into_owned());
        parts.push(img);
    }
    Ok((names, ImageBatch::concat(&parts)?))
}

/// Writes image `index` of `batch` as an 8-bit PNG. Quantization rounds to
/// the nearest level.
pub fn save_png(batch: &ImageBatch, index: usize, path: &Path) -> Result<()> {
    let g = batch.geometry();
    let px = batch.pixels_of(index);
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let plane = g.height * g.width;
    let (w, h) = (g.width as u32, g.height as u32);
    let res = if g.channels == 1 {
        GrayImage::from_raw(w, h, px.iter().map(|&v| q(v)).collect())
            .expect("buffer size")
            .save_with_format(path, ImageFormat::Png)
    } else {
        let mut buf = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for c in 0..3 {
                buf.push(q(px[c.min(g.channels - 1) * plane + i]));
            }
        }
        RgbImage::from_raw(w, h, buf)
            .expect("buffer size")
            .save_with_format(path, ImageFormat::Png)
    };
    res.map_err(|e| image_error(path, e))
}

/// Tiles a batch into a montage with `cols` columns and `pad` pixels of
/// white gutter between tiles.
pub fn grid(batch: &ImageBatch, cols: usize, pad: usize) -> Result<ImageBatch> {
    if batch.is_empty() || cols == 0 {
        return Err(Error::Config("grid needs at least one image and one column".into()));
    }
    let g = batch.geometry();
    let cols = cols.min(batch.len());
    let rows = batch.len().div_ceil(cols);
    let (gh, gw) = (rows * g.height + (rows - 1) * pad, cols * g.width + (cols - 1) * pad);
    let mut out = vec![1.0f32; g.channels * gh * gw];
    for i in 0..batch.len() {
        let (r, c) = (i / cols, i % cols);
        let (oy, ox) = (r * (g.height + pad), c * (g.width + pad));
        let px = batch.pixels_of(i);
        for ch in 0..g.channels {
            for y in 0..g.height {
                for x in 0..g.width {
                    out[(ch * gh + oy + y) * gw + ox + x] = px[(ch * g.height + y) * g.width + x];
                }
            }
        }
    }
    ImageBatch::new(Tensor::new([1, g.channels, gh, gw], out)?)
}

/// One line of a `id<TAB>path[<TAB>label]` manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub label: Option<String>,
}

/// Parses manifest text. Relative paths are resolved against `base`; blank
/// lines and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse(format!(
                "manifest line {}: expected id<TAB>path[<TAB>label]",
                lineno + 1
            )));
        }
        if !seen.insert(fields[0].to_string()) {
            return Err(Error::Parse(format!("manifest line {}: duplicate id {:?}", lineno + 1, fields[0])));
        }
        let path = Path::new(fields[1]);
        out.push(ManifestEntry {
            id: fields[0].to_string(),
            path: if path.is_absolute() { path.to_path_buf() } else { base.join(path) },
            label: fields.get(2).map(|s| s.to_string()),
        });
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}
