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

//! Checkpoint container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "IMPR"                      magic
//! u32                         format version
//! u32 + UTF-8                 JSON document {"spec": .., "metadata": ..}
//! u32                         tensor count
//! per tensor:
//!   u32 + UTF-8               name
//!   u8                        dtype (0 = f32, 1 = f64)
//!   u32                       rank
//!   u64 * rank                dims
//!   raw values
//! ```
//!
//! The fingerprint is the SHA-256 of every byte after the magic.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::real::{DType, Real};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"IMPR";
pub const FORMAT_VERSION: u32 = 1;

/// SHA-256 content hash identifying a checkpoint.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Parse(format!("fingerprint: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Parse("fingerprint must be 32 bytes of hex".into()))?;
        Ok(Fingerprint(arr))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Fingerprint::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub dataset: String,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl TensorData {
    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32(t) => t.shape(),
            TensorData::F64(t) => t.shape(),
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn to_real<T: Real>(&self) -> Tensor<T> {
        match self {
            TensorData::F32(t) => t.cast(),
            TensorData::F64(t) => t.cast(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub data: TensorData,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    spec: NetworkSpec,
    metadata: Option<TrainingMetadata>,
}

/// A network description with all of its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCheckpoint {
    spec: NetworkSpec,
    metadata: Option<TrainingMetadata>,
    params: Vec<NamedTensor>,
    fingerprint: Fingerprint,
}

impl NetworkCheckpoint {
    /// Validates `params` against the spec's parameter list (same names, same
    /// order, same shapes) and computes the fingerprint.
    pub fn new(spec: NetworkSpec, metadata: Option<TrainingMetadata>, params: Vec<NamedTensor>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.param_shapes()?;
        if expected.len() != params.len() {
            return Err(Error::Contract(format!(
                "spec needs {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.data.shape() {
                return Err(Error::Contract(format!(
                    "parameter {:?} {:?} does not match expected {name:?} {shape:?}",
                    p.name,
                    p.data.shape()
                )));
            }
            let finite = match &p.data {
                TensorData::F32(t) => t.is_finite(),
                TensorData::F64(t) => t.is_finite(),
            };
            if !finite {
                return Err(Error::Numeric(format!("parameter {name} holds a non-finite value")));
            }
        }
        let mut ckpt = NetworkCheckpoint {
            spec,
            metadata,
            params,
            fingerprint: Fingerprint([0; 32]),
        };
        let bytes = ckpt.encode_body();
        ckpt.fingerprint = Fingerprint(Sha256::digest(&bytes).into());
        Ok(ckpt)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn metadata(&self) -> Option<&TrainingMetadata> {
        self.metadata.as_ref()
    }

    pub fn params(&self) -> &[NamedTensor] {
        &self.params
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    fn encode_body(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(FORMAT_VERSION.to_le_bytes());
        let doc = serde_json::to_vec(&Document {
            spec: self.spec.clone(),
            metadata: self.metadata.clone(),
        })
        .expect("spec serializes");
        put_bytes(&mut out, &doc);
        out.extend((self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            put_bytes(&mut out, p.name.as_bytes());
            out.push(p.data.dtype() as u8);
            let shape = p.data.shape();
            out.extend((shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend((d as u64).to_le_bytes());
            }
            match &p.data {
                TensorData::F32(t) => t.data().iter().for_each(|v| out.extend(v.to_le_bytes())),
                TensorData::F64(t) => t.data().iter().for_each(|v| out.extend(v.to_le_bytes())),
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend(self.encode_body());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let doc_len = r.u32()? as usize;
        let doc: Document = serde_json::from_slice(r.take(doc_len)?)
            .map_err(|e| Error::Corrupt(format!("checkpoint document: {e}")))?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Corrupt("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = DType::from_tag(r.u8()?).ok_or_else(|| Error::Corrupt(format!("{name}: unknown dtype tag")))?;
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::Corrupt(format!("{name}: implausible rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Corrupt(format!("{name}: dimension overflow")))?);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Corrupt(format!("{name}: element count overflow")))?;
            let nbytes = numel
                .checked_mul(dtype.size())
                .ok_or_else(|| Error::Corrupt(format!("{name}: byte count overflow")))?;
            let raw = r.take(nbytes)?;
            let data = match dtype {
                DType::F32 => TensorData::F32(Tensor::new(
                    shape,
                    raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect(),
                )?),
                DType::F64 => TensorData::F64(Tensor::new(
                    shape,
                    raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
                )?),
            };
            params.push(NamedTensor { name, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ckpt = NetworkCheckpoint::new(doc.spec, doc.metadata, params).map_err(|e| match e {
            Error::Io { .. } => e,
            other => Error::Corrupt(other.to_string()),
        })?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend((b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n - remaining,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
