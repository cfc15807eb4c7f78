//! Transition datasets and their on-disk format.
//!
//! Layout (little-endian):
//! `"SGDS"` · u32 version · u32 header length · header JSON (domain spec,
//! pair count, vector dimension, optional seed) · `count·2·dim` f64 values
//! (current state then successor, pair by pair) · SHA-256 of all preceding
//! bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{encode, GridDomainSpec};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"SGDS";
const DATASET_VERSION: u32 = 1;

/// One observed transition, already encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPair {
    pub xbar: Vec<f64>,
    pub xr: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetHeader {
    spec: GridDomainSpec,
    count: u64,
    dim: u64,
    seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: GridDomainSpec,
    pub pairs: Vec<TransitionPair>,
    /// Seed recorded for provenance when the dataset was drawn by the CLI.
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.encoded_dim()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dim = self.dim();
        for p in &self.pairs {
            if p.xbar.len() != dim || p.xr.len() != dim {
                return Err(Error::shape(format!(
                    "pair has dims {}/{}, dataset wants {dim}",
                    p.xbar.len(),
                    p.xr.len()
                )));
            }
        }
        let header = DatasetHeader {
            spec: self.spec.clone(),
            count: self.pairs.len() as u64,
            dim: dim as u64,
            seed: self.seed,
        };
        let header_json = serde_json::to_vec(&header).map_err(|e| Error::Format {
            path: "<dataset>".to_string(),
            detail: e.to_string(),
        })?;
        let mut buf = Vec::with_capacity(16 + header_json.len() + self.pairs.len() * dim * 16);
        buf.extend_from_slice(DATASET_MAGIC);
        buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header_json);
        for p in &self.pairs {
            for x in p.xbar.iter().chain(p.xr.iter()) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let format_err = |detail: String| Error::Format { path: path.to_string(), detail };
        if bytes.len() < 32 {
            return Err(format_err("file too short".to_string()));
        }
        let (body, stored) = bytes.split_at(bytes.len() - 32);
        let digest = Sha256::digest(body);
        if digest.as_slice() != stored {
            return Err(Error::Checksum { path: path.to_string() });
        }
        let mut r = Reader { buf: body, pos: 0, path };
        let magic = r.take(4)?;
        if magic != DATASET_MAGIC {
            return Err(format_err("bad magic".to_string()));
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header: DatasetHeader = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| format_err(format!("header: {e}")))?;
        header.spec.validate()?;
        let dim = header.dim as usize;
        if dim != header.spec.encoded_dim() {
            return Err(format_err(format!(
                "header dim {dim} does not match the domain's {}",
                header.spec.encoded_dim()
            )));
        }
        let count = header.count as usize;
        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let xbar = r.f64s(dim)?;
            let xr = r.f64s(dim)?;
            pairs.push(TransitionPair { xbar, xr });
        }
        if r.pos != body.len() {
            return Err(format_err("trailing bytes".to_string()));
        }
        for (i, p) in pairs.iter().enumerate() {
            for (label, v) in [("current", &p.xbar), ("successor", &p.xr)] {
                encode::decode_exact(&header.spec, v).map_err(|e| {
                    format_err(format!("pair {i} {label} state is not a valid encoding: {e}"))
                })?;
            }
        }
        Ok(Dataset { spec: header.spec, pairs, seed: header.seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                path: self.path.to_string(),
                detail: "unexpected end of file".to_string(),
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
