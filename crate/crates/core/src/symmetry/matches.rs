use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::circular::{circular_stats, AngularStats};
use crate::activation::{centered_coords, grid_index};
use crate::classifier::{match_pixels, ClassifierConfig, MemoryBank};
use crate::error::{Error, Result};
use crate::manifest::LabeledMap;

/// One query pixel matched to one memory pixel, both in centered coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPoint {
    pub query_class: u32,
    pub memory_class: u32,
    pub xi: f64,
    pub yi: f64,
    pub x_nn: f64,
    pub y_nn: f64,
    pub same_class: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    #[default]
    SameClass,
    CrossClass,
    All,
}

impl Pairing {
    fn keeps(self, same: bool) -> bool {
        match self {
            Pairing::SameClass => same,
            Pairing::CrossClass => !same,
            Pairing::All => true,
        }
    }
}

impl std::str::FromStr for Pairing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same_class" | "same" => Ok(Pairing::SameClass),
            "cross_class" | "cross" => Ok(Pairing::CrossClass),
            "all" => Ok(Pairing::All),
            _ => Err(Error::config(format!("unknown pairing {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Uniform,
    Kernel,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "kernel" => Ok(Weighting::Kernel),
            _ => Err(Error::config(format!("unknown weighting {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub height: usize,
    pub width: usize,
    pub pairing: Pairing,
    pub points: Vec<MatchPoint>,
    /// Matches dropped by the pairing filter.
    pub filtered_out: usize,
}

impl MatchSet {
    /// True when the pairing filter left nothing to analyze.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One row per match point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "query_class",
            "memory_class",
            "xi",
            "yi",
            "x_nn",
            "y_nn",
            "same_class",
            "weight",
        ])?;
        for m in &self.points {
            w.write_record([
                m.query_class.to_string(),
                m.memory_class.to_string(),
                m.xi.to_string(),
                m.yi.to_string(),
                m.x_nn.to_string(),
                m.y_nn.to_string(),
                m.same_class.to_string(),
                m.weight.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every K-NN match of every query pixel, filtered by class pairing. Needs a
/// bank whose maps all share the queries' grid.
pub fn match_locations(
    queries: &[LabeledMap],
    bank: &MemoryBank,
    config: &ClassifierConfig,
    pairing: Pairing,
) -> Result<MatchSet> {
    let (h, w) = bank
        .grid()
        .ok_or_else(|| Error::config("match locations need a memory bank with a common grid"))?;
    if queries.is_empty() {
        return Err(Error::Empty("query set"));
    }
    if let Some(q) = queries.iter().find(|q| q.map.grid() != (h, w)) {
        return Err(Error::ShapeMismatch {
            expected: (h, w),
            actual: q.map.grid(),
        });
    }
    let per_query = queries
        .par_iter()
        .map(|q| {
            let mut kept = Vec::new();
            let mut dropped = 0usize;
            for pm in match_pixels(&q.map, &q.image_id, bank, config)? {
                let (xi, yi) = centered_coords(pm.row, pm.col, h, w);
                for (n, f) in pm.neighbors.iter().zip(pm.weights(config.epsilon)) {
                    let same = n.key.class_id == q.class_id;
                    if !pairing.keeps(same) {
                        dropped += 1;
                        continue;
                    }
                    let (x_nn, y_nn) = bank.location(n.id).expect("bank has a grid");
                    kept.push(MatchPoint {
                        query_class: q.class_id,
                        memory_class: n.key.class_id,
                        xi,
                        yi,
                        x_nn,
                        y_nn,
                        same_class: same,
                        weight: f,
                    });
                }
            }
            Ok((kept, dropped))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = MatchSet {
        height: h,
        width: w,
        pairing,
        points: Vec::new(),
        filtered_out: 0,
    };
    for (kept, dropped) in per_query {
        set.points.extend(kept);
        set.filtered_out += dropped;
    }
    Ok(set)
}

/// Circular statistics of the match locations x_nn.
pub fn angular_stats(matches: &[MatchPoint], weighting: Weighting) -> AngularStats {
    let pts: Vec<_> = matches.iter().map(|m| (m.x_nn, m.y_nn)).collect();
    match weighting {
        Weighting::Uniform => circular_stats(&pts, None),
        Weighting::Kernel => {
            let w: Vec<_> = matches.iter().map(|m| m.weight).collect();
            circular_stats(&pts, Some(&w))
        }
    }
}

/// Counts of x_nn per grid cell, row-major.
pub fn match_histogram(matches: &[MatchPoint], height: usize, width: usize) -> Vec<usize> {
    let mut counts = vec![0usize; height * width];
    for m in matches {
        if let Some((r, c)) = grid_index(m.x_nn, m.y_nn, height, width) {
            counts[r * width + c] += 1;
        }
    }
    counts
}

/// Empirical p(x_nn | x_i) over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalHistogram {
    pub height: usize,
    pub width: usize,
    pub xi: f64,
    pub yi: f64,
    /// Matches found at the query location; zero means the histogram is empty.
    pub n: usize,
    /// Row-major probabilities summing to 1, or all zero when `n == 0`.
    pub probs: Vec<f64>,
}

impl ConditionalHistogram {
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Population variance of x_nn about its mean, summed over both axes.
    pub fn spread(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let (mut mx, mut my, mut mxx) = (0.0, 0.0, 0.0);
        for r in 0..self.height {
            for c in 0..self.width {
                let p = self.probs[r * self.width + c];
                let (x, y) = centered_coords(r, c, self.height, self.width);
                mx += p * x;
                my += p * y;
                mxx += p * (x * x + y * y);
            }
        }
        mxx - mx * mx - my * my
    }
}

pub fn conditional_match_distribution(
    matches: &[MatchPoint],
    query_location: (f64, f64),
    height: usize,
    width: usize,
) -> ConditionalHistogram {
    let (xi, yi) = query_location;
    let at: Vec<MatchPoint> = matches
        .iter()
        .filter(|m| m.xi == xi && m.yi == yi)
        .cloned()
        .collect();
    let counts = match_histogram(&at, height, width);
    let n: usize = counts.iter().sum();
    let probs = if n == 0 {
        vec![0.0; counts.len()]
    } else {
        counts.iter().map(|&c| c as f64 / n as f64).collect()
    };
    ConditionalHistogram {
        height,
        width,
        xi,
        yi,
        n,
        probs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadTanVariance {
    pub radial: f64,
    pub tangential: f64,
    pub n: usize,
    /// Matches whose query location was the origin and so had no radial axis.
    pub excluded_origin: usize,
}

impl RadTanVariance {
    pub fn ratio(&self) -> f64 {
        self.tangential / self.radial
    }
}

/// Variance of the displacement x_nn − x_i along and across the radial
/// direction of x_i (population variance).
pub fn radial_tangential_variance(matches: &[MatchPoint]) -> RadTanVariance {
    let mut rad = Vec::with_capacity(matches.len());
    let mut tan = Vec::with_capacity(matches.len());
    let mut excluded = 0usize;
    for m in matches {
        let norm = m.xi.hypot(m.yi);
        if norm == 0.0 {
            excluded += 1;
            continue;
        }
        let (ux, uy) = (m.xi / norm, m.yi / norm);
        let (dx, dy) = (m.x_nn - m.xi, m.y_nn - m.yi);
        rad.push(dx * ux + dy * uy);
        tan.push(-dx * uy + dy * ux);
    }
    RadTanVariance {
        radial: variance(&rad),
        tangential: variance(&tan),
        n: rad.len(),
        excluded_origin: excluded,
    }
}

fn variance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Smallest radius around the origin holding at least `fraction` of the
/// match locations.
pub fn confusion_radius(matches: &[MatchPoint], fraction: f64) -> Option<f64> {
    if matches.is_empty() || !(0.0..=1.0).contains(&fraction) {
        return None;
    }
    let mut r: Vec<f64> = matches.iter().map(|m| m.x_nn.hypot(m.y_nn)).collect();
    r.sort_by(f64::total_cmp);
    let at = ((fraction * r.len() as f64).ceil() as usize).clamp(1, r.len()) - 1;
    Some(r[at])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSymmetryRow {
    pub class_id: u32,
    pub theta_deg: Option<f64>,
    pub r: f64,
    pub n: usize,
    pub n_origin: usize,
    pub rayleigh_z: f64,
    pub var_radial: f64,
    pub var_tangential: f64,
    pub confusion_radius_68: Option<f64>,
}

/// Angular and radial/tangential summary of the matches of each query class.
pub fn class_report(matches: &[MatchPoint], weighting: Weighting) -> Vec<ClassSymmetryRow> {
    let mut by_class: BTreeMap<u32, Vec<MatchPoint>> = BTreeMap::new();
    for m in matches {
        by_class.entry(m.query_class).or_default().push(m.clone());
    }
    by_class
        .into_iter()
        .map(|(class_id, ms)| {
            let a = angular_stats(&ms, weighting);
            let rt = radial_tangential_variance(&ms);
            ClassSymmetryRow {
                class_id,
                theta_deg: a.mean_angle_degrees(),
                r: a.resultant_length,
                n: a.n,
                n_origin: a.n_origin,
                rayleigh_z: a.rayleigh_z,
                var_radial: rt.radial,
                var_tangential: rt.tangential,
                confusion_radius_68: confusion_radius(&ms, 0.68),
            }
        })
        .collect()
}

pub fn write_class_report<W: Write>(rows: &[ClassSymmetryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "class_id",
        "theta_deg",
        "R",
        "n",
        "rayleigh_z",
        "var_radial",
        "var_tangential",
        "n_origin",
        "confusion_radius_68",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.class_id.to_string(),
            opt(r.theta_deg),
            r.r.to_string(),
            r.n.to_string(),
            r.rayleigh_z.to_string(),
            r.var_radial.to_string(),
            r.var_tangential.to_string(),
            r.n_origin.to_string(),
            opt(r.confusion_radius_68),
        ])?;
    }
    w.flush()?;
    Ok(())
}
