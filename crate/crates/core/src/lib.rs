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

//! Impression-space image encoding and decoding on a template CNN.
//!
//! A trained classifier's convolutional filters act as a fixed feature
//! dictionary. An image is *encoded* as the per-channel mean (and optionally
//! variance) of the activations at a set of tap points; images are *decoded*
//! by optimizing pixels until their code matches a target. The same machinery
//! gives unpaired image translation (match the ensembled code of a target
//! domain while staying close to the source pixels) and similarity ranking
//! (Euclidean distance between codes).
//!
//! The crate carries its own small tensor engine with reverse-mode
//! differentiation ([`tape`]), so everything runs on the CPU without external
//! model zoos.

pub mod adam;
pub mod data;
pub mod decoder;
pub mod error;
pub mod impression;
pub mod kernels;
pub mod network;
pub mod real;
pub mod retrieval;
pub mod tape;
pub mod tensor;
pub mod translator;

pub use error::{Category, Error, Result};
pub use real::Real;
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/templates.md")]
    mod templates {}
    #[doc = include_str!("../../../book/src/codes.md")]
    mod codes {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/translation.md")]
    mod translation {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
