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

use std::path::PathBuf;

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Config,
    Io,
    Incompatible,
    Numeric,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Io => "io",
            Category::Incompatible => "incompatibility",
            Category::Numeric => "numeric",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected:?}, got {got:?}")]
    Dimension {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("optimization diverged at iteration {iteration}: loss is {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("training diverged at epoch {epoch}, step {step}: loss is NaN, try a lower learning rate")]
    Training { epoch: usize, step: usize },

    #[error("incompatible {field}: {left} vs {right}")]
    Incompatible {
        field: &'static str,
        left: String,
        right: String,
    },

    #[error("bad checkpoint magic: {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("truncated file: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unknown task tag {tag:?}; known tags: {known}")]
    UnknownTask { tag: String, known: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn dim(op: &'static str, expected: &[usize], got: &[usize]) -> Self {
        Error::Dimension {
            op,
            expected: expected.to_vec(),
            got: got.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Io { .. } | Error::Image { .. } => Category::Io,
            Error::BadMagic(_)
            | Error::Version { .. }
            | Error::Truncated { .. }
            | Error::Corrupt(_)
            | Error::Parse(_)
            | Error::Invariant(_) => Category::Io,
            Error::Dimension { .. } | Error::Incompatible { .. } => Category::Incompatible,
            Error::Numeric(_) | Error::Diverged { .. } | Error::Training { .. } => {
                Category::Numeric
            }
            Error::Degenerate(_)
            | Error::Contract(_)
            | Error::State(_)
            | Error::Config(_)
            | Error::UnknownTask { .. } => Category::Config,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
