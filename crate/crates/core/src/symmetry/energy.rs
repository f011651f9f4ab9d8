use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::activation::{centered_coords, energy_map, ActivationMap, EnergyMap};
use crate::error::{Error, Result};

/// Angular sectors used for the per-ring asymmetry score.
pub const SECTORS: usize = 8;
const TINY: f64 = 1e-12;

/// Mean energy grouped by exact distance from the grid center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    /// Distinct pixel radii in ascending order; bin `i` holds the pixels at
    /// `radii[i]`, so the bins cover `[0, r_max]`.
    pub radii: Vec<f64>,
    pub mean_energy: Vec<f64>,
    /// Largest relative deviation of a sector mean from the ring mean.
    pub asymmetry: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RadialProfile {
    /// Columns: radius, mean_energy, asymmetry, count.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["radius", "mean_energy", "asymmetry", "count"])?;
        for i in 0..self.radii.len() {
            w.write_record([
                self.radii[i].to_string(),
                self.mean_energy[i].to_string(),
                self.asymmetry[i].to_string(),
                self.counts[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub mean: EnergyMap,
    pub profile: RadialProfile,
    pub maps: usize,
}

/// Averages per-pixel energy over `maps` and reduces it to a radial profile.
pub fn aggregate_energy(maps: &[ActivationMap]) -> Result<EnergySummary> {
    let first = maps.first().ok_or(Error::Empty("activation maps"))?;
    let (h, w) = first.grid();
    let mut cells = vec![0.0; h * w];
    for m in maps {
        if m.grid() != (h, w) {
            return Err(Error::ShapeMismatch {
                expected: (h, w),
                actual: m.grid(),
            });
        }
        for (acc, e) in cells.iter_mut().zip(energy_map(m).cells) {
            *acc += e;
        }
    }
    let n = maps.len() as f64;
    cells.iter_mut().for_each(|c| *c /= n);
    let mean = EnergyMap {
        height: h,
        width: w,
        cells,
    };
    let profile = radial_profile(&mean);
    Ok(EnergySummary {
        mean,
        profile,
        maps: maps.len(),
    })
}

fn sector(x: f64, y: f64) -> usize {
    if x == 0.0 && y == 0.0 {
        return 0;
    }
    let theta = y.atan2(x).rem_euclid(TAU);
    // nudge so points exactly on a sector boundary land in the upper sector
    ((theta / FRAC_PI_4 + 1e-9).floor() as usize) % SECTORS
}

pub(crate) fn radial_profile(energy: &EnergyMap) -> RadialProfile {
    let (h, w) = (energy.height, energy.width);
    // doubled coordinates are integers, so 4r² groups pixels exactly
    let mut rings: BTreeMap<i64, Vec<(f64, usize)>> = BTreeMap::new();
    for r in 0..h {
        for c in 0..w {
            let dx = 2 * c as i64 - (w as i64 - 1);
            let dy = (h as i64 - 1) - 2 * r as i64;
            let (x, y) = centered_coords(r, c, h, w);
            rings
                .entry(dx * dx + dy * dy)
                .or_default()
                .push((energy.get(r, c), sector(x, y)));
        }
    }
    let mut profile = RadialProfile {
        radii: Vec::with_capacity(rings.len()),
        mean_energy: Vec::with_capacity(rings.len()),
        asymmetry: Vec::with_capacity(rings.len()),
        counts: Vec::with_capacity(rings.len()),
    };
    for (r4, ring) in rings {
        let mean = ring.iter().map(|p| p.0).sum::<f64>() / ring.len() as f64;
        let mut sums = [0.0; SECTORS];
        let mut counts = [0usize; SECTORS];
        for &(e, s) in &ring {
            sums[s] += e;
            counts[s] += 1;
        }
        let asym = (0..SECTORS)
            .filter(|&s| counts[s] > 0)
            .map(|s| (sums[s] / counts[s] as f64 - mean).abs() / (mean + TINY))
            .fold(0.0, f64::max);
        profile.radii.push((r4 as f64).sqrt() / 2.0);
        profile.mean_energy.push(mean);
        profile.asymmetry.push(asym);
        profile.counts.push(ring.len());
    }
    profile
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map_from_energy(h: usize, w: usize, f: impl Fn(f64, f64) -> f64) -> ActivationMap {
        ActivationMap::from_fn(h, w, 1, true, |r, c, _| {
            let (x, y) = centered_coords(r, c, h, w);
            f(x, y).sqrt() as f32
        })
        .unwrap()
    }

    #[test]
    fn center_spike() {
        let m = map_from_energy(5, 5, |x, y| if x == 0.0 && y == 0.0 { 4.0 } else { 0.0 });
        let s = aggregate_energy(&[m]).unwrap();
        assert_eq!(s.profile.radii[0], 0.0);
        assert_eq!(s.profile.mean_energy[0], 4.0);
        assert!(s.profile.mean_energy[1..].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn bins_cover_grid() {
        let m = map_from_energy(4, 6, |_, _| 1.0);
        let p = aggregate_energy(&[m]).unwrap().profile;
        assert_eq!(p.counts.iter().sum::<usize>(), 24);
        assert!(p.radii.windows(2).all(|w| w[0] < w[1]));
        let rmax = (2.5f64 * 2.5 + 1.5 * 1.5).sqrt();
        assert!((p.radii.last().unwrap() - rmax).abs() < 1e-12);
        assert!(p.asymmetry.iter().all(|&a| a < 1e-12));
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("radius,mean_energy,asymmetry,count\n0.7071"));
        assert_eq!(text.lines().count(), p.radii.len() + 1);
    }

    #[test]
    fn radial_map_is_symmetric_and_lobe_is_not() {
        let sym = map_from_energy(9, 9, |x, y| (-(x * x + y * y) / 4.0).exp());
        let p = aggregate_energy(&[sym]).unwrap().profile;
        assert!(p.asymmetry.iter().all(|&a| a < 1e-6), "{:?}", p.asymmetry);
        let lobe = map_from_energy(9, 9, |x, y| (-((x - 2.0).powi(2) + y * y)).exp());
        let p = aggregate_energy(&[lobe]).unwrap().profile;
        assert!(p.asymmetry[1] > 0.5);
    }

    #[test]
    fn mean_of_maps() {
        let a = map_from_energy(3, 3, |_, _| 1.0);
        let b = map_from_energy(3, 3, |_, _| 3.0);
        let s = aggregate_energy(&[a, b]).unwrap();
        assert!(s.mean.cells.iter().all(|&e| (e - 2.0).abs() < 1e-6));
        assert_eq!(s.maps, 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(aggregate_energy(&[]), Err(Error::Empty(_))));
        let a = map_from_energy(3, 3, |_, _| 1.0);
        let b = map_from_energy(3, 4, |_, _| 1.0);
        assert!(matches!(
            aggregate_energy(&[a, b]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn sector_boundaries() {
        assert_eq!(sector(1.0, 0.0), 0);
        assert_eq!(sector(1.0, 1.0), 1);
        assert_eq!(sector(-1.0, -1.0), 5);
        assert_eq!(sector(0.0, -1.0), 6);
        assert_eq!(sector(1.0, -0.001), 7);
    }
}
