//! Deterministic synthetic activation maps.
//!
//! The lobe dataset plants, for each class, a bump of extra energy at a
//! class-specific angle on the image plane. Inside the bump the pixel vectors
//! share a class-specific channel pattern; elsewhere they are half-normal
//! noise.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::{centered_coords, ActivationMap};
use crate::error::{Error, Result};
use crate::manifest::LabeledMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobeSpec {
    pub classes: usize,
    pub per_class: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Distance of the lobe center from the grid center.
    pub radius: f64,
    /// Gaussian width of the lobe.
    pub spread: f64,
    pub amplitude: f64,
    /// Extra amplitude on the class's own channel block.
    pub contrast: f64,
    pub noise: f64,
    /// Angle of class 0 in degrees; classes are spaced evenly after it.
    pub phase_deg: f64,
    pub seed: u64,
}

impl Default for LobeSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            per_class: 40,
            height: 7,
            width: 7,
            channels: 64,
            radius: 2.0,
            spread: 0.8,
            amplitude: 3.0,
            contrast: 1.0,
            noise: 0.15,
            phase_deg: 18.0,
            seed: 0,
        }
    }
}

impl LobeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 {
            return Err(Error::config(
                "lobe dataset needs at least one class and image",
            ));
        }
        if self.height == 0 || self.width == 0 || self.channels < self.classes {
            return Err(Error::config(
                "lobe dataset needs channels >= classes and a non-empty grid",
            ));
        }
        if self.spread.is_nan() || self.spread <= 0.0 {
            return Err(Error::config("lobe spread must be positive"));
        }
        Ok(())
    }

    /// Lobe angle of `class` in radians, in [0, 2π).
    pub fn angle(&self, class: usize) -> f64 {
        (self.phase_deg.to_radians() + TAU * class as f64 / self.classes as f64).rem_euclid(TAU)
    }

    pub fn center(&self, class: usize) -> (f64, f64) {
        let a = self.angle(class);
        (self.radius * a.cos(), self.radius * a.sin())
    }
}

/// `classes × per_class` maps with ids `lobe-c{class}-{index}`, ordered by
/// class then index.
pub fn lobe_dataset(spec: &LobeSpec) -> Result<Vec<LabeledMap>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let block = spec.channels / spec.classes;
    let mut out = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        let (cx, cy) = spec.center(class);
        let own = class * block..(class + 1) * block;
        for i in 0..spec.per_class {
            let mut values = Vec::with_capacity(spec.height * spec.width * spec.channels);
            for r in 0..spec.height {
                for c in 0..spec.width {
                    let (x, y) = centered_coords(r, c, spec.height, spec.width);
                    let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                    let g = (-d2 / (2.0 * spec.spread * spec.spread)).exp();
                    for k in 0..spec.channels {
                        let bg: f64 = StandardNormal.sample(&mut rng);
                        let jitter: f64 = StandardNormal.sample(&mut rng);
                        let pattern = if own.contains(&k) { spec.contrast } else { 0.0 };
                        let v = (1.0 - g) * bg.abs()
                            + g * spec.amplitude * (1.0 + pattern)
                            + spec.noise * jitter.abs();
                        values.push(v as f32);
                    }
                }
            }
            out.push(LabeledMap {
                image_id: format!("lobe-c{class}-{i:03}"),
                class_id: class as u32,
                map: ActivationMap::new(spec.height, spec.width, spec.channels, values, true)?,
            });
        }
    }
    Ok(out)
}

/// Maps whose channel values are i.i.d. uniform on [0, 1).
pub fn uniform_maps(
    n: usize,
    classes: usize,
    grid: (usize, usize),
    channels: usize,
    seed: u64,
) -> Result<Vec<LabeledMap>> {
    use rand::Rng;
    if classes == 0 {
        return Err(Error::config("need at least one class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let map = ActivationMap::from_fn(grid.0, grid.1, channels, true, |_, _, _| {
                rng.random::<f32>()
            })?;
            Ok(LabeledMap {
                image_id: format!("uniform-{i:04}"),
                class_id: (i % classes) as u32,
                map,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::energy_map;

    #[test]
    fn deterministic_and_labeled() {
        let spec = LobeSpec {
            per_class: 2,
            ..Default::default()
        };
        let a = lobe_dataset(&spec).unwrap();
        let b = lobe_dataset(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_eq!(a[3].class_id, 1);
        assert!(a.iter().all(|m| m.map.check_nonneg()));
        let other = lobe_dataset(&LobeSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a[0].map, other[0].map);
    }

    #[test]
    fn energy_peaks_in_lobe_direction() {
        let spec = LobeSpec {
            per_class: 1,
            ..Default::default()
        };
        for m in lobe_dataset(&spec).unwrap() {
            let (x, y) = energy_map(&m.map).centroid().unwrap();
            let want = spec.angle(m.class_id as usize);
            let got = y.atan2(x).rem_euclid(TAU);
            let diff = (got - want + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
            assert!(
                diff.abs() < 10f64.to_radians(),
                "class {} off by {diff}",
                m.class_id
            );
        }
    }

    #[test]
    fn angles_are_evenly_spaced() {
        let spec = LobeSpec::default();
        assert!((spec.angle(0).to_degrees() - 18.0).abs() < 1e-12);
        assert!((spec.angle(4).to_degrees() - 306.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(lobe_dataset(&LobeSpec {
            classes: 0,
            ..Default::default()
        })
        .is_err());
        assert!(lobe_dataset(&LobeSpec {
            channels: 3,
            ..Default::default()
        })
        .is_err());
    }
}
