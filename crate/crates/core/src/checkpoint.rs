//! Binary checkpoint format.
//!
//! ```text
//! "NVGN" | version: u32 | meta_len: u32 | meta JSON | n_records: u32
//! record: name_len: u16 | name | ndim: u8 | dims: u64 × ndim | f64 × prod(dims)
//! sha256 of everything above (32 bytes)
//! ```
//! Integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::{ModelConfig, ModelParams};
use crate::train::AdamState;

pub const MAGIC: [u8; 4] = *b"NVGN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub adam_t: Option<u64>,
    /// Free-form provenance (config hash, data reference, ...).
    #[serde(default)]
    pub notes: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: Option<AdamState>,
    pub step: usize,
    pub notes: serde_json::Map<String, serde_json::Value>,
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    out.extend((name.len() as u16).to_le_bytes());
    out.extend(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend((d as u64).to_le_bytes());
    }
    for v in data {
        out.extend(v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = CheckpointMeta {
            model: self.params.cfg.clone(),
            step: self.step,
            adam_t: self.adam.as_ref().map(|a| a.t),
            notes: self.notes.clone(),
        };
        let meta = serde_json::to_vec(&meta).expect("meta serializes");
        let layout = &self.params.layout;
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        out.extend((meta.len() as u32).to_le_bytes());
        out.extend(&meta);
        let per = if self.adam.is_some() { 3 } else { 1 };
        out.extend(((layout.tensors.len() * per) as u32).to_le_bytes());
        for t in &layout.tensors {
            put_record(&mut out, &t.name, &t.shape, &self.params.values[t.range()]);
        }
        if let Some(a) = &self.adam {
            for (prefix, buf) in [("adam.m.", &a.m), ("adam.v.", &a.v)] {
                for t in &layout.tensors {
                    put_record(
                        &mut out,
                        &format!("{prefix}{}", t.name),
                        &t.shape,
                        &buf[t.range()],
                    );
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend(digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 4 {
            return Err(Error::CheckpointChecksum);
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::CheckpointMagic(magic));
        }
        if bytes.len() < 8 + 32 {
            return Err(Error::CheckpointChecksum);
        }
        let found = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if found != VERSION {
            return Err(Error::CheckpointVersion {
                expected: VERSION,
                found,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::CheckpointChecksum);
        }

        let mut r = Reader { buf: body, at: 8 };
        let meta_len = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
        meta.model.validate()?;
        let n_records = r.u32()? as usize;
        let mut records = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::CheckpointLayout("record name is not UTF-8".into()))?;
            let ndim = r.take(1)?[0] as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data: Vec<f64> = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            records.push((name, shape, data));
        }
        if r.at != body.len() {
            return Err(Error::CheckpointLayout(
                "trailing bytes after records".into(),
            ));
        }

        let mut params = ModelParams::init(&meta.model, 0)?;
        let layout = params.layout.clone();
        let expect = layout.tensors.len() * if meta.adam_t.is_some() { 3 } else { 1 };
        if records.len() != expect {
            return Err(Error::CheckpointLayout(format!(
                "expected {expect} records, found {}",
                records.len()
            )));
        }
        let mut m = vec![0.0; layout.total];
        let mut v = vec![0.0; layout.total];
        for (k, (name, shape, data)) in records.into_iter().enumerate() {
            let t = &layout.tensors[k % layout.tensors.len()];
            let (prefix, dst) = match k / layout.tensors.len() {
                0 => ("", &mut params.values),
                1 => ("adam.m.", &mut m),
                _ => ("adam.v.", &mut v),
            };
            if name != format!("{prefix}{}", t.name) || shape != t.shape {
                return Err(Error::CheckpointLayout(format!(
                    "record {k} is {name} {shape:?}, expected {prefix}{} {:?}",
                    t.name, t.shape
                )));
            }
            dst[t.range()].copy_from_slice(&data);
        }
        Ok(Checkpoint {
            params,
            adam: meta.adam_t.map(|t| AdamState { m, v, t }),
            step: meta.step,
            notes: meta.notes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CheckpointLayout("record runs past the end".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}
