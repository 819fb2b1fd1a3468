//! Binary checkpoint container.
//!
//! Layout (little endian): `b"PGCK"`, `u32` version, `u32` metadata length,
//! metadata JSON, `u32` tensor count, then per tensor a `u32` name length,
//! the UTF-8 name, `u32` rows, `u32` cols and `rows * cols` `f32` values.

use std::path::Path;

use serde_json::Value;

use super::config::DitConfig;
use super::model::Dit;
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Mat;

const MAGIC: &[u8; 4] = b"PGCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: serde_json::Map<String, Value>,
    pub tensors: Vec<(String, Mat<f32>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends every tensor of `store` under `prefix.`.
    pub fn put_params(&mut self, prefix: &str, store: &ParamStore<f32>) {
        for (n, t) in store.names().iter().zip(store.tensors()) {
            self.tensors.push((format!("{prefix}.{n}"), t.clone()));
        }
    }

    /// Collects the tensors stored under `prefix.` in file order.
    pub fn params(&self, prefix: &str) -> ParamStore<f32> {
        let head = format!("{prefix}.");
        let mut store = ParamStore::default();
        for (n, t) in &self.tensors {
            if let Some(rest) = n.strip_prefix(&head) {
                store.add(rest, t.clone());
            }
        }
        store
    }

    pub fn tensor(&self, name: &str) -> Option<&Mat<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Stores a model's config under `meta[prefix]` and its weights under `prefix.`.
    pub fn put_dit(&mut self, prefix: &str, dit: &Dit<f32>) -> Result<()> {
        self.meta
            .insert(prefix.to_string(), serde_json::to_value(dit.config())?);
        self.put_params(prefix, &dit.params);
        Ok(())
    }

    pub fn dit(&self, prefix: &str) -> Result<Dit<f32>> {
        let cfg = self
            .meta
            .get(prefix)
            .ok_or_else(|| Error::format("checkpoint", format!("no model named {prefix}")))?;
        let cfg: DitConfig = serde_json::from_value(cfg.clone())?;
        Dit::from_params(cfg, self.params(prefix))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::with_capacity(16 + meta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows as u32).to_le_bytes());
            out.extend_from_slice(&(t.cols as u32).to_le_bytes());
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let meta: serde_json::Map<String, Value> = serde_json::from_slice(r.take(n)?)?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|l| l.checked_mul(4))
                .ok_or_else(|| Error::format("checkpoint", "tensor too large"))?;
            let data = r
                .take(len)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((name, Mat::from_vec(rows, cols, data)));
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Checkpoint { meta, tensors })
    }

    /// Writes through a temporary file and a rename so readers never see a
    /// partial checkpoint.
    pub fn write(&self, path: &Path) -> Result<()> {
        crate::files::write_atomic(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
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
            .ok_or_else(|| Error::format("checkpoint", "truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = DitConfig::new(2, 16, 2, 4);
        let dit = Dit::<f32>::new(cfg, 3).unwrap();
        let mut ck = Checkpoint::new();
        ck.put_dit("coarse", &dit).unwrap();
        ck.meta.insert("steps".into(), Value::from(12));
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        let d2 = back.dit("coarse").unwrap();
        assert_eq!(d2.params, dit.params);
    }

    #[test]
    fn truncation_is_an_error() {
        let mut ck = Checkpoint::new();
        ck.tensors.push(("a".into(), Mat::from_vec(1, 2, vec![1.0, 2.0])));
        let b = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"XXXX").is_err());
    }
}
