//! Versioned parameter container.
//!
//! Layout (little endian):
//!
//! ```text
//! b"HYPNAVCK" | u32 format version | u64 header length | header JSON
//! u64 tensor count | per tensor:
//!     u32 name length | name | u8 kind | u64 rows | u64 cols | rows·cols f64
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{ParamKind, ParamStore};
use super::Mat;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HYPNAVCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub embed_dim: usize,
    /// Layer widths per named network, input first.
    pub layer_sizes: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub kind: ParamKind,
    pub value: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<Tensor>,
}

fn ck(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(embed_dim: usize) -> Self {
        Self {
            header: CheckpointHeader { format_version: FORMAT_VERSION, embed_dim, layer_sizes: BTreeMap::new() },
            tensors: Vec::new(),
        }
    }

    /// Stores every parameter of `store` under `prefix/name`.
    pub fn add_store(&mut self, prefix: &str, store: &ParamStore) {
        for p in store.params() {
            self.tensors.push(Tensor { name: format!("{prefix}/{}", p.name), kind: p.kind, value: p.value.clone() });
        }
    }

    /// Overwrites the values of `store` from tensors under `prefix/`. Every
    /// parameter must be present with a matching shape.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let by_name: BTreeMap<&str, &Tensor> = self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        for p in store.params_mut() {
            let key = format!("{prefix}/{}", p.name);
            let t = by_name.get(key.as_str()).ok_or_else(|| ck(format!("missing tensor `{key}`")))?;
            if t.value.dim() != p.value.dim() {
                return Err(ck(format!("tensor `{key}` has shape {:?}, expected {:?}", t.value.dim(), p.value.dim())));
            }
            p.value.assign(&t.value);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.header.format_version.to_le_bytes());
        let header = serde_json::to_vec(&self.header).map_err(|e| ck(e.to_string()))?;
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(match t.kind {
                ParamKind::Euclidean => 0,
                ParamKind::Manifold => 1,
            });
            let (r, c) = t.value.dim();
            out.extend_from_slice(&(r as u64).to_le_bytes());
            out.extend_from_slice(&(c as u64).to_le_bytes());
            for v in t.value.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(ck("bad magic"));
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != FORMAT_VERSION {
            return Err(ck(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(cur.array()?) as usize;
        let header: CheckpointHeader = serde_json::from_slice(cur.take(hlen)?).map_err(|e| ck(e.to_string()))?;
        if header.format_version != version {
            return Err(ck("header version disagrees with preamble"));
        }
        let count = u64::from_le_bytes(cur.array()?) as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let nlen = u32::from_le_bytes(cur.array()?) as usize;
            let name = String::from_utf8(cur.take(nlen)?.to_vec()).map_err(|e| ck(e.to_string()))?;
            let kind = match cur.take(1)?[0] {
                0 => ParamKind::Euclidean,
                1 => ParamKind::Manifold,
                k => return Err(ck(format!("unknown parameter kind {k}"))),
            };
            let rows = u64::from_le_bytes(cur.array()?) as usize;
            let cols = u64::from_le_bytes(cur.array()?) as usize;
            let n = rows.checked_mul(cols).ok_or_else(|| ck("tensor too large"))?;
            let raw = cur.take(n.checked_mul(8).ok_or_else(|| ck("tensor too large"))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            let value = Array2::from_shape_vec((rows, cols), data).map_err(|e| ck(e.to_string()))?;
            tensors.push(Tensor { name, kind, value });
        }
        if cur.pos != bytes.len() {
            return Err(ck("trailing bytes"));
        }
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| ck("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn store_round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store.add("a", ParamKind::Euclidean, array![[0.1, -2.5e-300, f64::MIN_POSITIVE]]);
        store.add("b", ParamKind::Manifold, array![[0.3], [-0.7]]);
        let mut ck = Checkpoint::new(2);
        ck.header.layer_sizes.insert("phi".into(), vec![9, 64, 32]);
        ck.add_store("planner", &store);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);

        let mut other = store.clone();
        other.params_mut()[0].value.fill(0.0);
        back.load_store("planner", &mut other).unwrap();
        assert_eq!(other.params()[0].value, store.params()[0].value);
    }

    #[test]
    fn rejects_corruption() {
        let ck = Checkpoint::new(2);
        let mut bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn shape_mismatch_on_load() {
        let mut a = ParamStore::new();
        a.add("w", ParamKind::Euclidean, array![[1.0, 2.0]]);
        let mut ck = Checkpoint::new(2);
        ck.add_store("p", &a);
        let mut b = ParamStore::new();
        b.add("w", ParamKind::Euclidean, array![[1.0], [2.0]]);
        assert!(ck.load_store("p", &mut b).is_err());
    }
}
