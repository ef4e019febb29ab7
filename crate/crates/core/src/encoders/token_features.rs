//! Binary `VQTF` files of per-question token feature matrices.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VQTF";

/// Token features keyed by question id, widened to f64.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenFeatureStore {
    records: BTreeMap<u64, Tensor>,
}

impl TokenFeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, question_id: u64, features: Tensor) -> Result<()> {
        if features.rank() != 2 {
            return Err(Error::dim("token features", features.shape(), &[]));
        }
        self.records.insert(question_id, features);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Feature dimension shared by every record, if any exist.
    pub fn dim(&self) -> Option<usize> {
        self.records.values().next().map(|t| t.shape()[1])
    }

    pub fn get(&self, question_id: u64) -> Result<&Tensor> {
        self.records.get(&question_id).ok_or_else(|| {
            Error::Lookup(format!("no token features for question {question_id}"))
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, &path.display().to_string())
    }

    pub fn decode(bytes: &[u8], source_name: &str) -> Result<Self> {
        let mut cur = Cursor {
            bytes,
            offset: 0,
            source_name,
        };
        if cur.take(4)? != MAGIC {
            return Err(cur.error(0, "bad magic, expected VQTF"));
        }
        let count = cur.u32()?;
        let mut store = Self::new();
        for _ in 0..count {
            let start = cur.offset;
            let qid = cur.u64()?;
            let n = cur.u32()? as usize;
            let dim = cur.u32()? as usize;
            if n == 0 || dim == 0 {
                return Err(cur.error(start, "empty feature matrix"));
            }
            let mut data = Vec::with_capacity(n * dim);
            for _ in 0..n * dim {
                data.push(f64::from(cur.f32()?));
            }
            store.records.insert(qid, Tensor::new(vec![n, dim], data)?);
        }
        if cur.offset != bytes.len() {
            return Err(cur.error(cur.offset, "trailing bytes"));
        }
        Ok(store)
    }

    /// Values are narrowed to f32 on disk.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (qid, t) in &self.records {
            out.extend_from_slice(&qid.to_le_bytes());
            out.extend_from_slice(&(t.shape()[0] as u32).to_le_bytes());
            out.extend_from_slice(&(t.shape()[1] as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

/// Reads the matrix stored for `question_id`.
pub fn load_precomputed_token_features(path: &Path, question_id: u64) -> Result<Tensor> {
    TokenFeatureStore::read(path)?.get(question_id).cloned()
}

/// Little-endian reader that reports byte offsets on truncation.
pub struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub offset: usize,
    pub source_name: &'a str,
}

impl<'a> Cursor<'a> {
    pub fn error(&self, offset: usize, detail: &str) -> Error {
        Error::Format {
            source_name: self.source_name.to_string(),
            offset: offset as u64,
            detail: detail.to_string(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.offset + n;
        if end > self.bytes.len() {
            return Err(self.error(self.offset, "truncated record"));
        }
        let slice = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(slice)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TokenFeatureStore {
        let mut s = TokenFeatureStore::new();
        s.insert(7, Tensor::from_rows(&[vec![0.5, -1.25, 3.0]]).unwrap())
            .unwrap();
        s.insert(
            42,
            Tensor::from_rows(&[vec![1.0, 2.0, 0.125], vec![-0.5, 0.0, 8.0]]).unwrap(),
        )
        .unwrap();
        s
    }

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.vqtf");
        let s = sample();
        s.write(&path).unwrap();
        let m = load_precomputed_token_features(&path, 42).unwrap();
        assert_eq!(m.shape(), &[2, 3]);
        assert_eq!(&m, s.get(42).unwrap());
        assert!(matches!(
            load_precomputed_token_features(&path, 3),
            Err(Error::Lookup(_))
        ));
    }

    #[test]
    fn corrupt_files_report_offsets() {
        let bytes = sample().encode();
        let err = TokenFeatureStore::decode(&bytes[..bytes.len() - 2], "x").unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset as usize, bytes.len() - 4),
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            TokenFeatureStore::decode(&bad, "x"),
            Err(Error::Format { offset: 0, .. })
        ));
    }
}
