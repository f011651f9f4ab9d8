use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::activation::{centered_coords, pixel_vectors, PixelVector};
use crate::ann::{IndexConfig, Metric, RpForest, VectorKey};
use crate::error::{Error, Result};
use crate::manifest::LabeledMap;

/// Labeled pixel vectors behind an ANN index, plus per-class vector counts.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    forest: RpForest,
    class_count: BTreeMap<u32, usize>,
    normalized: bool,
    grid: Option<(usize, usize)>,
}

/// What a saved index needs besides the forest itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankMeta {
    pub normalized: bool,
    pub grid: Option<(usize, usize)>,
    pub channels: usize,
    pub vectors: usize,
    pub class_count: BTreeMap<u32, usize>,
}

impl MemoryBank {
    pub fn from_maps(maps: &[LabeledMap], normalize: bool, index: IndexConfig) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Empty("memory maps"));
        }
        let mut vectors = Vec::new();
        for m in maps {
            vectors.extend(pixel_vectors(&m.map, &m.image_id, m.class_id, normalize)?);
        }
        let first = maps[0].map.grid();
        let grid = maps.iter().all(|m| m.map.grid() == first).then_some(first);
        Self::from_pixel_vectors(vectors, normalize, grid, index)
    }

    /// `normalized` records whether the vectors are unit length; `grid` is the
    /// common H×W of the source maps when there is one.
    pub fn from_pixel_vectors(
        vectors: Vec<PixelVector>,
        normalized: bool,
        grid: Option<(usize, usize)>,
        index: IndexConfig,
    ) -> Result<Self> {
        let entries = vectors
            .into_iter()
            .map(|pv| (VectorKey::from(&pv), pv.v))
            .collect();
        let forest = RpForest::build(entries, index)?;
        Self::from_forest(forest, normalized, grid)
    }

    pub fn from_forest(
        forest: RpForest,
        normalized: bool,
        grid: Option<(usize, usize)>,
    ) -> Result<Self> {
        if let Some((h, w)) = grid {
            if let Some(k) = forest
                .keys()
                .iter()
                .find(|k| k.row as usize >= h || k.col as usize >= w)
            {
                return Err(Error::ShapeMismatch {
                    expected: (h, w),
                    actual: (k.row as usize + 1, k.col as usize + 1),
                });
            }
        }
        let mut class_count = BTreeMap::new();
        for key in forest.keys() {
            *class_count.entry(key.class_id).or_insert(0) += 1;
        }
        Ok(Self {
            forest,
            class_count,
            normalized,
            grid,
        })
    }

    pub fn forest(&self) -> &RpForest {
        &self.forest
    }

    pub fn metric(&self) -> Metric {
        self.forest.metric()
    }

    pub fn channels(&self) -> usize {
        self.forest.dim()
    }

    pub fn len(&self) -> usize {
        self.forest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forest.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    /// Number of stored pixel vectors per class.
    pub fn class_count(&self) -> &BTreeMap<u32, usize> {
        &self.class_count
    }

    /// Centered image-plane position of stored vector `id`; needs a common grid.
    pub fn location(&self, id: usize) -> Option<(f64, f64)> {
        let (h, w) = self.grid?;
        let key = &self.forest.keys()[id];
        Some(centered_coords(key.row as usize, key.col as usize, h, w))
    }

    pub fn meta(&self) -> BankMeta {
        BankMeta {
            normalized: self.normalized,
            grid: self.grid,
            channels: self.channels(),
            vectors: self.len(),
            class_count: self.class_count.clone(),
        }
    }
}
