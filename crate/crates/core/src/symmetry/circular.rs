use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Below this resultant length the mean direction is reported as undefined.
const UNDEFINED_R: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularStats {
    /// Points contributing an angle (origin excluded).
    pub n: usize,
    /// Points that sat exactly on the origin and were skipped.
    pub n_origin: usize,
    /// Mean direction in (-π, π]; `None` when undefined (n = 0 or R ≈ 0).
    pub mean_angle: Option<f64>,
    pub resultant_length: f64,
    pub circular_variance: f64,
    /// Rayleigh statistic n·R².
    pub rayleigh_z: f64,
}

impl AngularStats {
    pub fn mean_angle_degrees(&self) -> Option<f64> {
        self.mean_angle.map(f64::to_degrees)
    }
}

/// Mean direction and resultant length of the angles `atan2(y, x)`.
/// `weights`, when given, must be parallel to `points`.
pub fn circular_stats(points: &[(f64, f64)], weights: Option<&[f64]>) -> AngularStats {
    if let Some(w) = weights {
        assert_eq!(w.len(), points.len(), "weights must be parallel to points");
    }
    let (mut sc, mut ss, mut sw) = (0.0, 0.0, 0.0);
    let (mut n, mut n_origin) = (0usize, 0usize);
    for (i, &(x, y)) in points.iter().enumerate() {
        if x == 0.0 && y == 0.0 {
            n_origin += 1;
            continue;
        }
        let w = weights.map_or(1.0, |w| w[i]);
        let theta = y.atan2(x);
        sc += w * theta.cos();
        ss += w * theta.sin();
        sw += w;
        n += 1;
    }
    if n == 0 || sw <= 0.0 {
        return AngularStats {
            n,
            n_origin,
            mean_angle: None,
            resultant_length: 0.0,
            circular_variance: 1.0,
            rayleigh_z: 0.0,
        };
    }
    let r = (sc.hypot(ss) / sw).min(1.0);
    let mean_angle = (r > UNDEFINED_R).then(|| {
        let a = ss.atan2(sc);
        if a <= -PI {
            PI
        } else {
            a
        }
    });
    AngularStats {
        n,
        n_origin,
        mean_angle,
        resultant_length: r,
        circular_variance: 1.0 - r,
        rayleigh_z: n as f64 * r * r,
    }
}
