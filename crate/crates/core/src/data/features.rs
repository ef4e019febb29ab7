//! Binary `VQRF` region-feature files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::encoders::{Cursor, RegionFeatures};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VQRF";
pub const VERSION: u32 = 1;

/// Region sets keyed by image id, all `k×dv`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub regions: usize,
    pub dim: usize,
    pub images: BTreeMap<u64, RegionFeatures>,
}

impl FeatureFile {
    pub fn new(regions: usize, dim: usize) -> Self {
        Self {
            regions,
            dim,
            images: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, image_id: u64, features: RegionFeatures) -> Result<()> {
        if features.regions() != self.regions || features.dim() != self.dim {
            return Err(Error::dim(
                "feature file insert",
                features.matrix().shape(),
                &[self.regions, self.dim],
            ));
        }
        self.images.insert(image_id, features);
        Ok(())
    }

    pub fn get(&self, image_id: u64) -> Result<&RegionFeatures> {
        self.images
            .get(&image_id)
            .ok_or_else(|| Error::Lookup(format!("no region features for image {image_id}")))
    }

    pub fn decode(bytes: &[u8], source_name: &str) -> Result<Self> {
        let mut cur = Cursor {
            bytes,
            offset: 0,
            source_name,
        };
        if cur.take(4)? != MAGIC {
            return Err(cur.error(0, "bad magic, expected VQRF"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(cur.error(4, &format!("unsupported version {version}")));
        }
        let regions = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        if regions == 0 || dim == 0 {
            return Err(cur.error(8, "region count and dimension must be positive"));
        }
        let count = cur.u32()?;
        let mut file = Self::new(regions, dim);
        for _ in 0..count {
            let image_id = cur.u64()?;
            let mut data = Vec::with_capacity(regions * dim);
            for _ in 0..regions * dim {
                data.push(f64::from(cur.f32()?));
            }
            let matrix = Tensor::new(vec![regions, dim], data)?;
            file.images.insert(image_id, RegionFeatures::new(matrix)?);
        }
        if cur.offset != bytes.len() {
            return Err(cur.error(cur.offset, "trailing bytes after last record"));
        }
        Ok(file)
    }

    /// Values are narrowed to f32.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.images.len() * (8 + 4 * self.regions * self.dim));
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.regions as u32, self.dim as u32, self.images.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (id, f) in &self.images {
            out.extend_from_slice(&id.to_le_bytes());
            for v in f.matrix().data() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_region_features(path: &Path) -> Result<FeatureFile> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureFile::decode(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn file_from(values: &[f32], k: usize, dv: usize) -> FeatureFile {
        let mut f = FeatureFile::new(k, dv);
        for (i, chunk) in values.chunks(k * dv).enumerate() {
            let data = chunk.iter().map(|v| f64::from(*v)).collect();
            f.insert(i as u64 * 7, RegionFeatures::new(Tensor::new(vec![k, dv], data).unwrap()).unwrap())
                .unwrap();
        }
        f
    }

    #[test]
    fn two_images_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.vqrf");
        let f = file_from(&[0.5, -1.0, 2.25, 3.0, 1e-3, -7.5, 0.0, 4.0], 2, 2);
        f.write(&path).unwrap();
        let back = load_region_features(&path).unwrap();
        assert_eq!(back.images.len(), 2);
        assert_eq!(back, f);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let bytes = file_from(&[1.0; 12], 3, 2).encode();
        // Header 20 bytes, each record 8 + 24 bytes; cut into the 2nd record.
        let cut = &bytes[..20 + 32 + 10];
        match FeatureFile::decode(cut, "x") {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20 + 32 + 8),
            other => panic!("{other:?}"),
        }
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(FeatureFile::decode(&bad, "x"), Err(Error::Format { offset: 0, .. })));
    }

    proptest! {
        #[test]
        fn round_trip_preserves_f32_bits(bits in proptest::collection::vec(any::<u32>(), 6..=6)) {
            let values: Vec<f32> = bits.iter().map(|b| f32::from_bits(*b)).filter(|v| v.is_finite()).collect();
            prop_assume!(values.len() == 6);
            let f = file_from(&values, 3, 2);
            let back = FeatureFile::decode(&f.encode(), "x").unwrap();
            let got: Vec<u32> = back.images.values().flat_map(|r| r.matrix().data().iter().map(|v| (*v as f32).to_bits())).collect();
            prop_assert_eq!(got, bits);
        }
    }
}
