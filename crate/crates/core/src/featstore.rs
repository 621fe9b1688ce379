//! `HCVF` binary feature store.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "HCVF" | version u32 | count u32 | dim u32
//! count × (id_len u16, id bytes UTF-8)
//! count × dim f32, row-major
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HCVF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// A feature vector with its sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub sample_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: impl Into<String>, values: &[f32]) -> Result<()> {
        let id = id.into();
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: values.len(),
            });
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("sample id longer than {} bytes", u16::MAX)));
        }
        if self.index.contains_key(&id) {
            return Err(Error::InvalidArgument(format!("duplicate sample id '{id}'")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn push_f64(&mut self, id: impl Into<String>, values: &[f64]) -> Result<()> {
        let v: Vec<f32> = values.iter().map(|&x| x as f32).collect();
        self.push(id, &v)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn get_f64(&self, id: &str) -> Option<Vec<f64>> {
        self.get(id).map(|r| r.iter().map(|&x| x as f64).collect())
    }

    pub fn vector(&self, id: &str) -> Option<FeatureVector> {
        self.get_f64(id).map(|values| FeatureVector {
            sample_id: id.to_string(),
            values,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|s| 2 + s.len()).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + id_bytes + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4, "truncated magic")? != MAGIC {
            return Err(Error::Format {
                what: "bad magic".into(),
                offset: 0,
            });
        }
        let version = cur.u32("truncated version")?;
        if version != VERSION {
            return Err(Error::Format {
                what: format!("unsupported version {version}"),
                offset: 4,
            });
        }
        let count = cur.u32("truncated count")? as usize;
        let dim = cur.u32("truncated dim")? as usize;

        let mut store = FeatureStore::new(dim);
        let mut ids = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let len = cur.u16("truncated id length")? as usize;
            let start = cur.pos;
            let raw = cur.take(len, "truncated id")?;
            let id = std::str::from_utf8(raw).map_err(|_| Error::Format {
                what: "invalid UTF-8 in sample id".into(),
                offset: start as u64,
            })?;
            ids.push((id.to_string(), start));
        }
        let mut row = vec![0f32; dim];
        for (id, id_offset) in ids {
            for v in row.iter_mut() {
                *v = f32::from_le_bytes(cur.take(4, "truncated feature data")?.try_into().expect("4 bytes"));
            }
            store.push(id, &row).map_err(|e| Error::Format {
                what: e.to_string(),
                offset: id_offset as u64,
            })?;
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format {
                what: "trailing bytes".into(),
                offset: cur.pos as u64,
            });
        }
        Ok(store)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Reads a store and rejects it unless its dimension is `dim`.
    pub fn read_with_dim(path: &Path, dim: usize) -> Result<Self> {
        let store = Self::read(path)?;
        if store.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: store.dim,
            });
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                what: what.into(),
                offset: self.pos as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_store_is_header_only() {
        let s = FeatureStore::new(7);
        let b = s.to_bytes();
        assert_eq!(b.len(), 16);
        assert_eq!(FeatureStore::from_bytes(&b).unwrap(), s);
    }

    #[test]
    fn byte_accounting_single_vector() {
        let mut s = FeatureStore::new(4);
        s.push("img1/h/o", &[1.0, -2.0, 0.5, 3.25]).unwrap();
        let b = s.to_bytes();
        assert_eq!(b.len(), 16 + (2 + "img1/h/o".len()) + 16);
        assert_eq!(FeatureStore::from_bytes(&b).unwrap(), s);
    }

    #[test]
    fn corrupt_magic_reports_offset_zero() {
        let mut b = FeatureStore::new(2).to_bytes();
        b[0] = b'X';
        match FeatureStore::from_bytes(&b) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncation_and_version_errors() {
        let mut s = FeatureStore::new(3);
        s.push("a", &[1.0, 2.0, 3.0]).unwrap();
        let b = s.to_bytes();
        match FeatureStore::from_bytes(&b[..b.len() - 1]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, 16 + 3 + 8),
            other => panic!("unexpected {other:?}"),
        }
        let mut v = b.clone();
        v[4] = 9;
        assert!(matches!(FeatureStore::from_bytes(&v), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn dimension_checks() {
        let mut s = FeatureStore::new(3);
        assert!(s.push("a", &[1.0]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.hcvf");
        s.write(&p).unwrap();
        assert!(matches!(FeatureStore::read_with_dim(&p, 4), Err(Error::DimensionMismatch { .. })));
        assert!(FeatureStore::read_with_dim(&p, 3).is_ok());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(dim in 0usize..6, rows in proptest::collection::vec(proptest::collection::vec(any::<u32>(), 6), 0..8)) {
            let mut s = FeatureStore::new(dim);
            for (i, r) in rows.iter().enumerate() {
                let vals: Vec<f32> = r[..dim].iter().map(|&bits| f32::from_bits(bits)).collect();
                s.push(format!("id-{i}"), &vals).unwrap();
            }
            let back = FeatureStore::from_bytes(&s.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), s.to_bytes());
            prop_assert_eq!(back.ids(), s.ids());
        }
    }
}
