//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "CGANCKPT"
//! version    u32
//! header_len u32, then header_len bytes of JSON (keys sorted)
//! count      u32
//! count x { name_len u32, name bytes, rows u64, cols u64, rows*cols f64 }
//! digest     32 bytes  SHA-256 of everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};
use super::scalar::Scalar;
use crate::digest::{sha256, sha256_hex};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CGANCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub seed: u64,
    pub vocab_hash: String,
    pub hyperparameters: serde_json::Value,
    #[serde(default)]
    pub manifest: Option<String>,
}

pub fn encode<S: Scalar>(header: &CheckpointHeader, params: &ParamStore<S>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let header_json = serde_json::to_vec(&serde_json::to_value(header)?)?;
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for t in 0..params.len() {
        let id = ParamId(t);
        let name = params.name(id).as_bytes();
        let value = params.value(id);
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(value.cols() as u64).to_le_bytes());
        for v in value.as_slice() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    let digest = sha256(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<(CheckpointHeader, ParamStore<S>)> {
    if bytes.len() < MAGIC.len() + 32 {
        return Err(Error::Checkpoint("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if sha256(body).as_slice() != digest {
        return Err(Error::Checkpoint("digest mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = r.u32()? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)?;
    let count = r.u32()? as usize;
    let mut store = ParamStore::new(header.seed);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::Checkpoint(format!("tensor name: {e}")))?
            .to_string();
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| S::lit(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        store.insert(name, Matrix::from_vec(rows, cols, data)?)?;
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((header, store))
}

/// Writes the checkpoint and returns the hex digest of the written bytes.
pub fn save<S: Scalar>(path: &Path, header: &CheckpointHeader, params: &ParamStore<S>) -> Result<String> {
    let bytes = encode(header, params)?;
    std::fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn load<S: Scalar>(path: &Path) -> Result<(CheckpointHeader, ParamStore<S>)> {
    decode(&std::fs::read(path)?)
}
