use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `k×dv` matrix of region vectors for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionFeatures(Tensor);

impl RegionFeatures {
    pub fn new(matrix: Tensor) -> Result<Self> {
        if matrix.rank() != 2 {
            return Err(Error::dim("region features", matrix.shape(), &[]));
        }
        Ok(Self(matrix))
    }

    pub fn regions(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn matrix(&self) -> &Tensor {
        &self.0
    }

    pub fn into_matrix(self) -> Tensor {
        self.0
    }

    /// Mean over regions.
    pub fn mean_pool(&self) -> Tensor {
        let (k, dv) = (self.regions(), self.dim());
        let mut out = vec![0.0; dv];
        for r in 0..k {
            for (o, v) in out.iter_mut().zip(self.0.row(r)) {
                *o += v;
            }
        }
        Tensor::vector(out.into_iter().map(|s| s / k as f64).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualKind {
    /// Bottom-up region sets.
    Regions,
    /// One global vector per image, seen as a single region.
    PooledVector,
}

impl VisualKind {
    pub fn name(self) -> &'static str {
        match self {
            VisualKind::Regions => "regions",
            VisualKind::PooledVector => "pooled_vector",
        }
    }
}

impl fmt::Display for VisualKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VisualKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "regions" => Ok(VisualKind::Regions),
            "pooled_vector" | "pooled" => Ok(VisualKind::PooledVector),
            other => Err(Error::Config(format!(
                "unknown visual mode '{other}' (available: regions, pooled_vector)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VisualMode {
    pub kind: VisualKind,
    pub regions: usize,
    pub dim: usize,
}

impl VisualMode {
    pub fn regions(regions: usize, dim: usize) -> Result<Self> {
        if regions == 0 || dim == 0 {
            return Err(Error::Config("region count and dimension must be positive".into()));
        }
        Ok(Self {
            kind: VisualKind::Regions,
            regions,
            dim,
        })
    }

    pub fn pooled(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        Ok(Self {
            kind: VisualKind::PooledVector,
            regions: 1,
            dim,
        })
    }

    /// Region count seen by fusion and attention.
    pub fn effective_regions(&self) -> usize {
        match self.kind {
            VisualKind::Regions => self.regions,
            VisualKind::PooledVector => 1,
        }
    }
}

/// Regions mode passes a `k×dv` matrix through; pooled mode turns a single
/// `dv` vector into a `1×dv` region set.
pub fn adapt_visual(features: &Tensor, mode: &VisualMode) -> Result<RegionFeatures> {
    let expected = [mode.effective_regions(), mode.dim];
    match (mode.kind, features.shape()) {
        (VisualKind::Regions, [k, dv]) if *k == expected[0] && *dv == mode.dim => {
            RegionFeatures::new(features.clone())
        }
        (VisualKind::PooledVector, [dv]) | (VisualKind::PooledVector, [1, dv])
            if *dv == mode.dim =>
        {
            RegionFeatures::new(features.clone().reshape(vec![1, mode.dim])?)
        }
        (_, shape) => Err(Error::dim("adapt_visual", shape, &expected)),
    }
}

/// Brings stored region sets into `mode`: pooled mode averages them first.
pub fn prepare_visual(stored: &RegionFeatures, mode: &VisualMode) -> Result<RegionFeatures> {
    match mode.kind {
        VisualKind::Regions => adapt_visual(stored.matrix(), mode),
        VisualKind::PooledVector => adapt_visual(&stored.mean_pool(), mode),
    }
}
