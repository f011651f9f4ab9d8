//! Approximate K-nearest-neighbour search over pixel vectors.
//!
//! [`RpForest`] is an Annoy-style random projection forest: every tree
//! recursively splits its vectors with the perpendicular bisector of two
//! randomly drawn points. Queries walk all trees best-first from one shared
//! priority queue until `search_budget` candidates have been gathered, then
//! re-rank those candidates exactly. [`brute_force_knn`] is the full-scan
//! reference used to check it.

mod brute;
mod forest;
mod persist;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use brute::brute_force_knn;
pub use forest::{Node, RpForest, Tree};
pub use persist::{INDEX_MAGIC, INDEX_VERSION};

use crate::activation::PixelVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; zero vectors are at distance 1 from everything.
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na.sqrt() * nb.sqrt())
                }
            }
        }
    }

    /// Converts a distance in this metric to the Euclidean distance it implies
    /// between unit-normalized vectors (identity for `Euclidean`).
    pub fn to_euclidean(self, d: f64) -> f64 {
        match self {
            Metric::Euclidean => d,
            Metric::Cosine => (2.0 * d).max(0.0).sqrt(),
        }
    }

    fn code(self) -> u8 {
        match self {
            Metric::Euclidean => 0,
            Metric::Cosine => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Metric::Euclidean),
            1 => Some(Metric::Cosine),
            _ => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::config(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub n_trees: usize,
    pub leaf_size: usize,
    pub seed: u64,
    pub metric: Metric,
    /// Candidate pool size per query; `None` means `n_trees * k`.
    pub search_budget: Option<usize>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            n_trees: 16,
            leaf_size: 8,
            seed: 0,
            metric: Metric::Euclidean,
            search_budget: None,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::config("n_trees must be >= 1"));
        }
        if self.leaf_size < 2 {
            return Err(Error::config("leaf_size must be >= 2"));
        }
        if self.search_budget == Some(0) {
            return Err(Error::config("search_budget must be >= 1"));
        }
        Ok(())
    }

    pub fn budget_for(&self, k: usize) -> usize {
        self.search_budget.unwrap_or(self.n_trees * k)
    }
}

/// Identifies a stored vector. Ordering is lexicographic on
/// `(image_id, row, col)`, which is the tie rule for equal distances.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VectorKey {
    pub image_id: Arc<str>,
    pub row: u32,
    pub col: u32,
    pub class_id: u32,
}

impl VectorKey {
    pub fn new(image_id: &str, row: usize, col: usize, class_id: u32) -> Self {
        Self {
            image_id: Arc::from(image_id),
            row: row as u32,
            col: col as u32,
            class_id,
        }
    }
}

impl From<&PixelVector> for VectorKey {
    fn from(pv: &PixelVector) -> Self {
        VectorKey::new(&pv.image_id, pv.row, pv.col, pv.class_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    /// Position in the index's vector table.
    pub id: usize,
    pub key: VectorKey,
    pub distance: f64,
}

pub(crate) fn rank_order(a: &(f64, &VectorKey), b: &(f64, &VectorKey)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}
