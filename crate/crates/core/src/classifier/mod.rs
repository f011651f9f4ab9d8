//! Kernel-density classification from per-pixel nearest-neighbour matches.
//!
//! For every query pixel vector `q_i` the K nearest memory vectors are
//! retrieved from the whole bank. Each match `j` votes for its class with
//! weight `exp(-d_ij² / (α_i² + ε))`, where the bandwidth `α_i` is the distance
//! to the closest match. Class totals are divided by the number of memory
//! vectors carrying that class, and the class with the largest score wins
//! (lowest class id on ties).

mod bank;
mod eval;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bank::{BankMeta, MemoryBank};
pub use eval::{evaluate, EvalReport, Prediction};

use crate::activation::{pixel_vectors, ActivationMap};
use crate::ann::{Metric, Neighbor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub k: usize,
    /// Must be > 0 in normal use. Zero is accepted as a test mode that makes
    /// the kernel exactly scale-free.
    pub epsilon: f64,
    pub metric: Metric,
    pub normalize_vectors: bool,
    pub exclude_same_image: bool,
    /// Retrieve with a budget covering the whole bank instead of the index's
    /// search budget.
    pub exact: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            k: 10,
            epsilon: 1e-8,
            metric: Metric::Euclidean,
            normalize_vectors: true,
            exclude_same_image: true,
            exact: false,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("k must be >= 1"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon must be finite and >= 0"));
        }
        Ok(())
    }
}

/// `exp(-d² / (α² + ε))`. With a zero denominator the limit is used: 1 at
/// `d = 0`, otherwise 0.
pub fn kernel_similarity(d: f64, alpha: f64, epsilon: f64) -> f64 {
    let denom = alpha * alpha + epsilon;
    if denom == 0.0 {
        return if d == 0.0 { 1.0 } else { 0.0 };
    }
    (-(d * d) / denom).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class_id: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodTable {
    /// The arg-max class.
    pub best: u32,
    /// One entry per class in the bank, ascending class id.
    pub scores: Vec<ClassScore>,
}

impl LikelihoodTable {
    pub fn from_scores(scores: BTreeMap<u32, f64>) -> Result<Self> {
        let mut best: Option<(u32, f64)> = None;
        for (&c, &s) in &scores {
            // strict > keeps the lowest class id on ties
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        let (best, _) = best.ok_or(Error::Empty("likelihood table"))?;
        Ok(Self {
            best,
            scores: scores
                .into_iter()
                .map(|(class_id, score)| ClassScore { class_id, score })
                .collect(),
        })
    }

    pub fn score(&self, class_id: u32) -> Option<f64> {
        self.scores
            .iter()
            .find(|s| s.class_id == class_id)
            .map(|s| s.score)
    }

    /// Highest scores first; equal scores by ascending class id.
    pub fn ranked(&self) -> Vec<ClassScore> {
        let mut v = self.scores.clone();
        v.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.class_id.cmp(&b.class_id))
        });
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("likelihood table serializes")
    }
}

/// Retrieval result for one query pixel.
#[derive(Debug, Clone)]
pub struct PixelMatches {
    pub row: usize,
    pub col: usize,
    /// Adaptive bandwidth: Euclidean-equivalent distance of the first match.
    pub alpha: f64,
    pub neighbors: Vec<Neighbor>,
    /// Euclidean-equivalent distances, parallel to `neighbors`.
    pub distances: Vec<f64>,
}

impl PixelMatches {
    pub fn weights(&self, epsilon: f64) -> impl Iterator<Item = f64> + '_ {
        self.distances
            .iter()
            .map(move |&d| kernel_similarity(d, self.alpha, epsilon))
    }
}

fn check_compat(bank: &MemoryBank, config: &ClassifierConfig) -> Result<()> {
    config.validate()?;
    if config.metric != bank.metric() {
        return Err(Error::config(format!(
            "classifier metric {} differs from index metric {}",
            config.metric,
            bank.metric()
        )));
    }
    if config.normalize_vectors != bank.normalized() {
        return Err(Error::config(
            "normalize_vectors must match how the memory bank was built",
        ));
    }
    Ok(())
}

fn retrieve(
    bank: &MemoryBank,
    q: &[f64],
    config: &ClassifierConfig,
    exclude: Option<&str>,
) -> Result<Vec<Neighbor>> {
    let forest = bank.forest();
    let found = if config.exact {
        forest.query_knn_exact(q, config.k, exclude)?
    } else {
        let budget = forest.config().budget_for(config.k).max(config.k);
        forest.query_knn_with_budget(q, config.k, exclude, budget)?
    };
    if found.is_empty() {
        return Err(Error::Empty("memory bank (after exclusion)"));
    }
    Ok(found)
}

/// Bandwidth for one query vector: distance to its nearest (non-excluded)
/// memory vector, from the same retrieval pass the classifier uses.
pub fn adaptive_bandwidth(
    q: &[f64],
    bank: &MemoryBank,
    config: &ClassifierConfig,
    exclude_image: Option<&str>,
) -> Result<f64> {
    check_compat(bank, config)?;
    let found = retrieve(bank, q, config, exclude_image)?;
    Ok(bank.metric().to_euclidean(found[0].distance))
}

/// K-NN matches for every pixel of `query`, in raster order.
pub fn match_pixels(
    query: &ActivationMap,
    query_id: &str,
    bank: &MemoryBank,
    config: &ClassifierConfig,
) -> Result<Vec<PixelMatches>> {
    check_compat(bank, config)?;
    if query.channels() != bank.channels() {
        return Err(Error::DimensionMismatch {
            expected: bank.channels(),
            actual: query.channels(),
        });
    }
    let exclude = config.exclude_same_image.then_some(query_id);
    let pixels = pixel_vectors(query, query_id, 0, config.normalize_vectors)?;
    let metric = bank.metric();
    pixels
        .par_iter()
        .map(|pv| {
            let neighbors = retrieve(bank, &pv.v, config, exclude)?;
            let distances: Vec<f64> = neighbors
                .iter()
                .map(|n| metric.to_euclidean(n.distance))
                .collect();
            Ok(PixelMatches {
                row: pv.row,
                col: pv.col,
                alpha: distances[0],
                neighbors,
                distances,
            })
        })
        .collect()
}

/// Class-frequency-normalized kernel density of `query` under each class.
pub fn image_likelihood(
    query: &ActivationMap,
    query_id: &str,
    bank: &MemoryBank,
    config: &ClassifierConfig,
) -> Result<LikelihoodTable> {
    let matches = match_pixels(query, query_id, bank, config)?;
    let mut sums: BTreeMap<u32, f64> = bank.class_count().keys().map(|&c| (c, 0.0)).collect();
    // fixed pixel order keeps the sum reproducible regardless of threading
    for pm in &matches {
        for (n, w) in pm.neighbors.iter().zip(pm.weights(config.epsilon)) {
            *sums
                .get_mut(&n.key.class_id)
                .expect("class present in bank") += w;
        }
    }
    for (class, total) in sums.iter_mut() {
        *total /= bank.class_count()[class] as f64;
    }
    LikelihoodTable::from_scores(sums)
}

pub fn classify(
    query: &ActivationMap,
    query_id: &str,
    bank: &MemoryBank,
    config: &ClassifierConfig,
) -> Result<u32> {
    Ok(image_likelihood(query, query_id, bank, config)?.best)
}
