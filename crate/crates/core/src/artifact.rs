//! Binary artifact files: a JSON header followed by a flat float block.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes   b"WCERT\0\x01\0"
//! hlen    u64       length of the header in bytes
//! header  hlen      UTF-8 JSON object
//! body    ...       f64 values, one block after another, row-major
//! ```
//!
//! The header carries a `blocks` array of `{name, rows, cols}` entries that
//! describes the body; everything else in it is caller metadata. Datasets,
//! network checkpoints and probes all use this format.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const MAGIC: &[u8; 8] = b"WCERT\0\x01\0";

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    /// Caller metadata; `blocks` is managed by the codec.
    pub header: Map<String, Value>,
    pub blocks: Vec<(String, Matrix)>,
}

impl Artifact {
    pub fn new(kind: &str) -> Self {
        let mut header = Map::new();
        header.insert("kind".into(), Value::String(kind.into()));
        Self {
            header,
            blocks: Vec::new(),
        }
    }

    pub fn kind(&self) -> Option<&str> {
        self.header.get("kind").and_then(Value::as_str)
    }

    pub fn set(&mut self, key: &str, value: Value) -> &mut Self {
        self.header.insert(key.into(), value);
        self
    }

    pub fn push_block(&mut self, name: impl Into<String>, m: Matrix) -> &mut Self {
        self.blocks.push((name.into(), m));
        self
    }

    pub fn block(&self, name: &str) -> Result<&Matrix> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Format(format!("artifact has no block `{name}`")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = self.header.clone();
        let blocks: Vec<Value> = self
            .blocks
            .iter()
            .map(|(n, m)| json!({"name": n, "rows": m.rows(), "cols": m.cols()}))
            .collect();
        header.insert("blocks".into(), Value::Array(blocks));
        let header_bytes = serde_json::to_vec(&Value::Object(header))?;
        let body_len: usize = self.blocks.iter().map(|(_, m)| m.len()).sum();
        let mut out = Vec::with_capacity(16 + header_bytes.len() + 8 * body_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for (_, m) in &self.blocks {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Format("bad artifact magic".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body_start = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("header length past end of file".into()))?;
        let header: Value = serde_json::from_slice(&bytes[16..body_start])?;
        let Value::Object(mut header) = header else {
            return Err(Error::Format("header is not a JSON object".into()));
        };
        let specs = header
            .remove("blocks")
            .and_then(|b| b.as_array().cloned())
            .ok_or_else(|| Error::Format("header lacks `blocks`".into()))?;
        let mut offset = body_start;
        let mut blocks = Vec::with_capacity(specs.len());
        for spec in specs {
            let name = spec["name"]
                .as_str()
                .ok_or_else(|| Error::Format("block without name".into()))?
                .to_string();
            let rows = spec["rows"].as_u64().unwrap_or(u64::MAX) as usize;
            let cols = spec["cols"].as_u64().unwrap_or(u64::MAX) as usize;
            let count = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Format(format!("block `{name}` size overflows")))?;
            let end = count
                .checked_mul(8)
                .and_then(|b| offset.checked_add(b))
                .filter(|&e| e <= bytes.len())
                .ok_or_else(|| Error::Format(format!("block `{name}` runs past end of file")))?;
            let data = bytes[offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            blocks.push((name, Matrix::from_vec(rows, cols, data)?));
            offset = end;
        }
        if offset != bytes.len() {
            return Err(Error::Format("trailing bytes after last block".into()));
        }
        Ok(Self { header, blocks })
    }

    pub fn write(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(sha256_hex(&bytes))
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(sha256_hex(&fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bytes_round_trip(
            rows in 0usize..6,
            cols in 0usize..6,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::numcore::RngStream::new(seed, 0);
            let m = rng.normal_matrix(rows, cols, 3.0);
            let mut a = Artifact::new("test");
            a.set("seed", json!(seed));
            a.push_block("m", m.clone()).push_block("e", Matrix::zeros(0, 2));
            let back = Artifact::from_bytes(&a.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back, a);
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut a = Artifact::new("test");
        a.push_block("m", Matrix::filled(2, 2, 1.0));
        let bytes = a.to_bytes().unwrap();
        assert!(Artifact::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(Artifact::from_bytes(b"nonsense").is_err());
    }
}
