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

//! MNIST in its IDX form, read from the dataset cache directory.
//!
//! The cache lives in `$IMPRESSION_DATA_DIR` (default `./data`) under
//! `mnist/`, holding the four uncompressed IDX files.

use std::path::{Path, PathBuf};

use super::{Geometry, ImageBatch, LabeledSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const GEOMETRY: Geometry = Geometry::new(1, 28, 28);

pub const FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

pub fn data_dir() -> PathBuf {
    std::env::var_os("IMPRESSION_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated { offset: at, needed: 4 })
}

/// Decodes an IDX3 image file into `[0, 1]` pixels.
pub fn parse_images(bytes: &[u8]) -> Result<ImageBatch> {
    if be_u32(bytes, 0)? != 0x0803 {
        return Err(Error::Corrupt("not an IDX3 unsigned-byte image file".into()));
    }
    let n = be_u32(bytes, 4)? as usize;
    let (h, w) = (be_u32(bytes, 8)? as usize, be_u32(bytes, 12)? as usize);
    let body = &bytes[16..];
    if body.len() < n * h * w {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: n * h * w - body.len(),
        });
    }
    let data = body[..n * h * w].iter().map(|&b| b as f32 / 255.0).collect();
    ImageBatch::new(Tensor::new([n, 1, h, w], data)?)
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    if be_u32(bytes, 0)? != 0x0801 {
        return Err(Error::Corrupt("not an IDX1 unsigned-byte label file".into()));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Truncated {
            offset: bytes.len(),
            needed: n - body.len(),
        });
    }
    Ok(body[..n].iter().map(|&b| b as usize).collect())
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let p = dir.join(name);
    std::fs::read(&p).map_err(|e| Error::io(p, e))
}

/// Loads `(train, test)` from `dir`.
pub fn load(dir: &Path) -> Result<(LabeledSet, LabeledSet)> {
    let train = LabeledSet::new(
        "mnist-train",
        parse_images(&read(dir, FILES[0])?)?,
        parse_labels(&read(dir, FILES[1])?)?,
    )?;
    let test = LabeledSet::new(
        "mnist-test",
        parse_images(&read(dir, FILES[2])?)?,
        parse_labels(&read(dir, FILES[3])?)?,
    )?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tiny_idx_files() {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1];
        img.extend([0, 255, 51, 102, 255, 0, 0, 0]);
        let batch = parse_images(&img).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.geometry(), Geometry::new(1, 2, 1));
        assert_eq!(batch.data()[1], 1.0);

        let labels = parse_labels(&[0, 0, 8, 1, 0, 0, 0, 3, 7, 1, 9]).unwrap();
        assert_eq!(labels, vec![7, 1, 9]);
    }

    #[test]
    fn truncated_and_foreign_files_are_errors() {
        assert!(matches!(parse_labels(&[0, 0, 8, 1, 0, 0, 0, 5, 1]), Err(Error::Truncated { .. })));
        assert!(matches!(parse_images(&[0, 0, 8, 1, 0, 0, 0, 0]), Err(Error::Corrupt(_))));
        assert!(matches!(parse_images(&[0, 0]), Err(Error::Truncated { .. })));
    }
}
