//! Activation tensors for a single image at a single layer, and the descriptors
//! derived from them.
//!
//! Values are held as `f32` (the on-disk dtype) and promoted to `f64` whenever
//! a derived quantity is computed, so that reassembling a map from its pixel
//! vectors is lossless.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// H×W×C grid of channel activations, stored row → col → channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    height: usize,
    width: usize,
    channels: usize,
    nonneg: bool,
    values: Vec<f32>,
}

impl ActivationMap {
    /// Validates dimensions and payload. The `nonneg` flag is recorded, not
    /// enforced; use [`ActivationMap::check_nonneg`] where it must hold.
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f32>,
        nonneg: bool,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::ZeroDimension {
                height,
                width,
                channels,
            });
        }
        let expected = height * width * channels;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self {
            height,
            width,
            channels,
            nonneg,
            values,
        })
    }

    /// Builds a map from a per-pixel closure; handy for synthetic fixtures.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        nonneg: bool,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for k in 0..channels {
                    values.push(f(r, c, k));
                }
            }
        }
        Self::new(height, width, channels, values, nonneg)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Channel vector at `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.values[(row * self.width + col) * self.channels + channel]
    }

    /// True when every value is ≥ 0 (or the flag is unset).
    pub fn check_nonneg(&self) -> bool {
        !self.nonneg || self.values.iter().all(|&v| v >= 0.0)
    }
}

/// Per-pixel squared norm of the channel vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyMap {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<f64>,
}

impl EnergyMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.width + col]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    /// Energy-weighted mean position in centered coordinates. `None` for an
    /// all-zero map.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let total = self.total();
        if total <= 0.0 {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for r in 0..self.height {
            for c in 0..self.width {
                let (x, y) = centered_coords(r, c, self.height, self.width);
                let e = self.get(r, c);
                sx += e * x;
                sy += e * y;
            }
        }
        Some((sx / total, sy / total))
    }
}

pub fn energy_map(map: &ActivationMap) -> EnergyMap {
    let cells = map
        .values
        .chunks_exact(map.channels)
        .map(|px| px.iter().map(|&v| f64::from(v) * f64::from(v)).sum())
        .collect();
    EnergyMap {
        height: map.height,
        width: map.width,
        cells,
    }
}

/// Grid index → image-plane coordinates with the origin at the grid center and
/// the y axis pointing up.
pub fn centered_coords(row: usize, col: usize, height: usize, width: usize) -> (f64, f64) {
    let x = col as f64 - (width as f64 - 1.0) / 2.0;
    let y = (height as f64 - 1.0) / 2.0 - row as f64;
    (x, y)
}

/// Inverse of [`centered_coords`]; `None` when the point is off-grid or not on
/// a pixel center.
pub fn grid_index(x: f64, y: f64, height: usize, width: usize) -> Option<(usize, usize)> {
    let col = x + (width as f64 - 1.0) / 2.0;
    let row = (height as f64 - 1.0) / 2.0 - y;
    let (rc, cc) = (row.round(), col.round());
    if (row - rc).abs() > 1e-9 || (col - cc).abs() > 1e-9 {
        return None;
    }
    if rc < 0.0 || cc < 0.0 || rc >= height as f64 || cc >= width as f64 {
        return None;
    }
    Some((rc as usize, cc as usize))
}

/// One spatial location's channel vector, tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelVector {
    pub image_id: String,
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
    pub v: Vec<f64>,
    pub class_id: u32,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Splits a map into its H·W channel vectors in raster order, optionally
/// scaling each to unit length.
pub fn pixel_vectors(
    map: &ActivationMap,
    image_id: &str,
    class_id: u32,
    normalize: bool,
) -> Result<Vec<PixelVector>> {
    let mut out = Vec::with_capacity(map.height * map.width);
    for row in 0..map.height {
        for col in 0..map.width {
            let mut v: Vec<f64> = map.pixel(row, col).iter().map(|&a| f64::from(a)).collect();
            if normalize {
                normalize_in_place(&mut v).ok_or_else(|| Error::ZeroVector {
                    image_id: image_id.to_string(),
                    row,
                    col,
                })?;
            }
            let (x, y) = centered_coords(row, col, map.height, map.width);
            out.push(PixelVector {
                image_id: image_id.to_string(),
                row,
                col,
                x,
                y,
                v,
                class_id,
            });
        }
    }
    Ok(out)
}

/// Scales `v` to unit length; returns `None` (leaving `v` untouched) when it is
/// exactly zero.
pub fn normalize_in_place(v: &mut [f64]) -> Option<f64> {
    let n = l2_norm(v);
    if n == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|a| *a /= n);
    Some(n)
}

/// Reassembles a map from pixel vectors, which may arrive in any order but must
/// cover every `(row, col)` exactly once.
pub fn assemble_map(
    vectors: &[PixelVector],
    height: usize,
    width: usize,
    nonneg: bool,
) -> Result<ActivationMap> {
    let first = vectors.first().ok_or(Error::Empty("pixel vectors"))?;
    let channels = first.v.len();
    if vectors.len() != height * width {
        return Err(Error::DimensionMismatch {
            expected: height * width,
            actual: vectors.len(),
        });
    }
    let mut values = vec![0f32; height * width * channels];
    let mut seen = vec![false; height * width];
    for pv in vectors {
        if pv.v.len() != channels {
            return Err(Error::DimensionMismatch {
                expected: channels,
                actual: pv.v.len(),
            });
        }
        if pv.row >= height || pv.col >= width {
            return Err(Error::ShapeMismatch {
                expected: (height, width),
                actual: (pv.row + 1, pv.col + 1),
            });
        }
        let cell = pv.row * width + pv.col;
        if std::mem::replace(&mut seen[cell], true) {
            return Err(Error::config(format!(
                "duplicate pixel ({}, {})",
                pv.row, pv.col
            )));
        }
        for (dst, &src) in values[cell * channels..(cell + 1) * channels]
            .iter_mut()
            .zip(&pv.v)
        {
            *dst = src as f32;
        }
    }
    ActivationMap::new(height, width, channels, values, nonneg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Avg,
    Max,
    Flatten,
}

/// Whole-image descriptor baselines: per-channel mean, per-channel max, or the
/// raster-order flattening of the full map.
pub fn pool_descriptor(map: &ActivationMap, mode: PoolMode) -> Vec<f64> {
    match mode {
        PoolMode::Flatten => map.values.iter().map(|&v| f64::from(v)).collect(),
        PoolMode::Avg => {
            let mut acc = vec![0.0; map.channels];
            for px in map.values.chunks_exact(map.channels) {
                for (a, &v) in acc.iter_mut().zip(px) {
                    *a += f64::from(v);
                }
            }
            let n = (map.height * map.width) as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        }
        PoolMode::Max => {
            let mut acc = vec![f64::NEG_INFINITY; map.channels];
            for px in map.values.chunks_exact(map.channels) {
                for (a, &v) in acc.iter_mut().zip(px) {
                    *a = a.max(f64::from(v));
                }
            }
            acc
        }
    }
}
