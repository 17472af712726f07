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

//! Images, labeled datasets and their on-disk forms.

mod io;
pub mod mnist;
pub mod procedural;

pub use io::{
    grid, load_image, load_images_in_dir, parse_manifest, read_manifest, resize_bilinear,
    save_png, ManifestEntry,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Channel count and spatial extent of a single image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Geometry {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Geometry {
            channels,
            height,
            width,
        }
    }

    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn shape(&self, n: usize) -> [usize; 4] {
        [n, self.channels, self.height, self.width]
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A batch of `N x C x H x W` images with pixel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBatch {
    pixels: Tensor<f32>,
}

impl ImageBatch {
    pub fn new(pixels: Tensor<f32>) -> Result<Self> {
        pixels.dims4("image batch")?;
        if let Some(v) = pixels.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invariant(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(ImageBatch { pixels })
    }

    /// Builds a batch, clamping every value into `[0, 1]` first.
    pub fn from_clamped<T: Real>(shape: [usize; 4], data: &[T]) -> Result<Self> {
        let data = data.iter().map(|v| v.f64().clamp(0.0, 1.0) as f32).collect();
        Self::new(Tensor::new(shape, data)?)
    }

    pub fn empty(geometry: Geometry) -> Self {
        ImageBatch {
            pixels: Tensor::zeros(geometry.shape(0)),
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn geometry(&self) -> Geometry {
        let s = self.pixels.shape();
        Geometry::new(s[1], s[2], s[3])
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.pixels
    }

    pub fn data(&self) -> &[f32] {
        self.pixels.data()
    }

    pub fn cast<T: Real>(&self) -> Tensor<T> {
        self.pixels.cast()
    }

    /// Pixels of image `i`.
    pub fn pixels_of(&self, i: usize) -> &[f32] {
        let n = self.geometry().numel();
        &self.pixels.data()[i * n..(i + 1) * n]
    }

    pub fn image(&self, i: usize) -> ImageBatch {
        self.select(&[i])
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> ImageBatch {
        let idx: Vec<usize> = range.collect();
        self.select(&idx)
    }

    pub fn select(&self, indices: &[usize]) -> ImageBatch {
        let g = self.geometry();
        let mut data = Vec::with_capacity(indices.len() * g.numel());
        for &i in indices {
            data.extend_from_slice(self.pixels_of(i));
        }
        ImageBatch {
            pixels: Tensor::new(g.shape(indices.len()), data).expect("select shape"),
        }
    }

    /// Concatenates batches of one geometry.
    pub fn concat(parts: &[ImageBatch]) -> Result<ImageBatch> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Degenerate("concatenating zero image batches".into()))?;
        let g = first.geometry();
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            if p.geometry() != g {
                return Err(Error::dim("concat", &g.shape(1), &p.geometry().shape(1)));
            }
            data.extend_from_slice(p.data());
            n += p.len();
        }
        Ok(ImageBatch {
            pixels: Tensor::new(g.shape(n), data)?,
        })
    }

    /// Mirrors every image left to right.
    pub fn flipped(&self) -> ImageBatch {
        let [n, c, h, w] = self.geometry().shape(self.len());
        let src = self.data();
        let data = Tensor::from_fn([n, c, h, w], |i| {
            let x = i % w;
            src[i - x + (w - 1 - x)]
        });
        ImageBatch { pixels: data }
    }
}

/// Images with integer class labels.
#[derive(Clone, Debug)]
pub struct LabeledSet {
    pub name: String,
    pub images: ImageBatch,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(name: impl Into<String>, images: ImageBatch, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::dim("labeled set", &[images.len()], &[labels.len()]));
        }
        Ok(LabeledSet {
            name: name.into(),
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn of_class(&self, class: usize) -> ImageBatch {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == class).collect();
        self.images.select(&idx)
    }
}
