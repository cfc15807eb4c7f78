//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! `"SGCK"` magic · `u32` format version · `u32` meta length · meta (JSON) ·
//! `u32` parameter count · per parameter { `u16` name length · name ·
//! `u8` rank · `u32` dims · `f64` data } · trailing SHA-256 of every
//! preceding byte. Loads verify magic, version, and checksum.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{DiscriminatorNet, GeneratorNet, Linear, Mlp};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SGCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)
            .map_err(|e| Error::Format { path: "<checkpoint>".into(), detail: e.to_string() })?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            let nb = name.as_bytes();
            out.extend_from_slice(&(nb.len() as u16).to_le_bytes());
            out.extend_from_slice(nb);
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let fmt = |detail: String| Error::Format { path: origin.to_string(), detail };
        if bytes.len() < 44 {
            return Err(fmt("truncated container".to_string()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum { path: origin.to_string() });
        }
        let mut cur = Cursor { buf: body, pos: 0, origin };
        if cur.take(4)? != MAGIC {
            return Err(fmt("bad magic".to_string()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(fmt(format!("unsupported version {version}")));
        }
        let meta_len = cur.u32()? as usize;
        let meta: serde_json::Value =
            serde_json::from_slice(cur.take(meta_len)?).map_err(|e| fmt(e.to_string()))?;
        let count = cur.u32()? as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|e| fmt(e.to_string()))?;
            let rank = cur.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cur.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = cur.take(n * 8)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.push((name, Tensor::new(shape, data).map_err(|e| fmt(e.to_string()))?));
        }
        if cur.pos != body.len() {
            return Err(fmt("trailing bytes".to_string()));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                path: self.origin.to_string(),
                detail: "unexpected end of data".to_string(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn pack_layers(prefix: &str, layers: &[Linear]) -> Vec<(String, Tensor)> {
    let mut out = Vec::with_capacity(layers.len() * 2);
    for (i, l) in layers.iter().enumerate() {
        out.push((format!("{prefix}w{i}"), l.w.clone()));
        out.push((format!("{prefix}b{i}"), l.b.clone()));
    }
    out
}

fn unpack_layers(
    prefix: &str,
    count: usize,
    params: &BTreeMap<&str, &Tensor>,
    origin: &str,
) -> Result<Vec<Linear>> {
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let w = params.get(format!("{prefix}w{i}").as_str());
        let b = params.get(format!("{prefix}b{i}").as_str());
        match (w, b) {
            (Some(&w), Some(&b)) => layers.push(Linear { w: w.clone(), b: b.clone() }),
            _ => {
                return Err(Error::Format {
                    path: origin.to_string(),
                    detail: format!("missing parameter {prefix}{{w,b}}{i}"),
                })
            }
        }
    }
    Ok(layers)
}

pub fn pack_generator(net: &GeneratorNet, prefix: &str) -> Vec<(String, Tensor)> {
    pack_layers(prefix, &net.layers)
}

pub fn unpack_generator(
    prefix: &str,
    input_dim: usize,
    noise_dim: usize,
    params: &[(String, Tensor)],
    origin: &str,
) -> Result<GeneratorNet> {
    let map: BTreeMap<&str, &Tensor> = params.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let layers = unpack_layers(prefix, 7, &map, origin)?;
    Ok(GeneratorNet { layers, input_dim, noise_dim })
}

pub fn pack_discriminator(net: &DiscriminatorNet, prefix: &str) -> Vec<(String, Tensor)> {
    pack_layers(prefix, &net.mlp.layers)
}

pub fn unpack_discriminator(
    prefix: &str,
    state_dim: usize,
    params: &[(String, Tensor)],
    origin: &str,
) -> Result<DiscriminatorNet> {
    let map: BTreeMap<&str, &Tensor> = params.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let layers = unpack_layers(prefix, 4, &map, origin)?;
    Ok(DiscriminatorNet { mlp: Mlp { layers, linear_output: true }, state_dim })
}
