use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-class 2-D target points are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// Every class at (0, 0): the auxiliary term carries no class information.
    Centered,
    /// Corners (±1, ±1), cycled over the classes and shuffled.
    Discrete,
    /// I.i.d. uniform on [-1, 1]².
    Uniform,
    /// I.i.d. uniform angles on the unit circle.
    UnitCircle,
}

impl LabelKind {
    pub const ALL: [LabelKind; 4] = [
        LabelKind::Centered,
        LabelKind::Discrete,
        LabelKind::Uniform,
        LabelKind::UnitCircle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LabelKind::Centered => "centered",
            LabelKind::Discrete => "discrete",
            LabelKind::Uniform => "uniform",
            LabelKind::UnitCircle => "unit_circle",
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LabelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown label kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub kind: LabelKind,
    pub seed: u64,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct U1Label {
    pub class_id: u32,
    /// `atan2(y, x)`; 0 for the origin.
    pub theta: f64,
    pub x: f64,
    pub y: f64,
}

impl U1Label {
    fn at(class_id: u32, x: f64, y: f64) -> Self {
        Self {
            class_id,
            theta: if x == 0.0 && y == 0.0 {
                0.0
            } else {
                y.atan2(x)
            },
            x,
            y,
        }
    }

    pub fn coords(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// A generated label set; `labels[c]` belongs to class `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub kind: LabelKind,
    pub seed: u64,
    pub labels: Vec<U1Label>,
}

#[derive(Serialize)]
struct LabelRecord {
    class_id: u32,
    theta: f64,
    x: f64,
    y: f64,
    kind: LabelKind,
    seed: u64,
}

impl LabelSet {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, class_id: u32) -> Result<&U1Label> {
        self.labels
            .get(class_id as usize)
            .ok_or(Error::UnknownClass(class_id))
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.labels.iter().map(U1Label::coords).collect()
    }

    /// JSON array of `{class_id, theta, x, y, kind, seed}` records.
    pub fn to_json(&self) -> String {
        let records: Vec<_> = self
            .labels
            .iter()
            .map(|l| LabelRecord {
                class_id: l.class_id,
                theta: l.theta,
                x: l.x,
                y: l.y,
                kind: self.kind,
                seed: self.seed,
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("labels serialize")
    }
}

pub fn gen_labels(config: &LabelConfig) -> Result<LabelSet> {
    if config.n_classes == 0 {
        return Err(Error::config("n_classes must be >= 1"));
    }
    let n = config.n_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let points: Vec<(f64, f64)> = match config.kind {
        LabelKind::Centered => vec![(0.0, 0.0); n],
        LabelKind::Discrete => {
            const CORNERS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
            let mut pts: Vec<_> = (0..n).map(|i| CORNERS[i % 4]).collect();
            pts.shuffle(&mut rng);
            pts
        }
        LabelKind::Uniform => (0..n)
            .map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)))
            .collect(),
        LabelKind::UnitCircle => {
            let labels = (0..n)
                .map(|c| {
                    let theta = rng.random_range(0.0..TAU);
                    U1Label {
                        class_id: c as u32,
                        theta,
                        x: theta.cos(),
                        y: theta.sin(),
                    }
                })
                .collect();
            return Ok(LabelSet {
                kind: config.kind,
                seed: config.seed,
                labels,
            });
        }
    };
    Ok(LabelSet {
        kind: config.kind,
        seed: config.seed,
        labels: points
            .into_iter()
            .enumerate()
            .map(|(c, (x, y))| U1Label::at(c as u32, x, y))
            .collect(),
    })
}
