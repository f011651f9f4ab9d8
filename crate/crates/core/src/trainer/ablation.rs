use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate, gen_labels, train, Dataset, LabelConfig, LabelKind, NetConfig, ToyNet, TrainConfig,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub kinds: Vec<LabelKind>,
    pub seeds: Vec<u64>,
    pub net: NetConfig,
    pub train: TrainConfig,
    /// Start every kind from the same weights for a given seed. When off, the
    /// initial weights also depend on the kind.
    pub controlled_init: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            kinds: LabelKind::ALL.to_vec(),
            seeds: (0..5).collect(),
            net: NetConfig {
                input: 16,
                hidden: vec![32],
                classes: 8,
                u1_layers: 1,
            },
            train: TrainConfig {
                epochs: 40,
                ..Default::default()
            },
            controlled_init: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub kind: LabelKind,
    pub seed: u64,
    pub init_checksum: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub kind: LabelKind,
    pub mean: f64,
    /// Sample standard deviation over seeds.
    pub std: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub runs: Vec<AblationRun>,
    pub controlled_init: bool,
    pub train_checksum: String,
    pub test_checksum: String,
}

impl AblationTable {
    /// True when, for every seed, all kinds started from identical weights.
    pub fn init_is_shared(&self) -> bool {
        let mut by_seed: BTreeMap<u64, &str> = BTreeMap::new();
        self.runs.iter().all(|r| {
            let first = by_seed.entry(r.seed).or_insert(&r.init_checksum);
            *first == r.init_checksum
        })
    }

    /// Kinds ordered by mean test accuracy, best first.
    pub fn ranking(&self) -> Vec<LabelKind> {
        let mut rows: Vec<_> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.kind.cmp(&b.kind)));
        rows.into_iter().map(|r| r.kind).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "mean", "std", "n_seeds"])?;
        for r in &self.rows {
            w.write_record([
                r.kind.name().to_string(),
                r.mean.to_string(),
                r.std.to_string(),
                r.n_seeds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Trains one network per (kind, seed) with identical data and budgets and
/// tabulates test accuracy per kind. Runs are independent and executed in
/// parallel; each run is itself deterministic, so the table is too.
pub fn label_config_ablation(
    train_set: &Dataset,
    test_set: &Dataset,
    config: &AblationConfig,
) -> Result<AblationTable> {
    if config.seeds.len() < 2 {
        return Err(Error::config("ablation needs at least two seeds"));
    }
    if config.kinds.is_empty() {
        return Err(Error::config("ablation needs at least one label kind"));
    }
    config.train.validate()?;
    test_set.validate()?;
    let jobs: Vec<(usize, LabelKind, u64)> = config
        .seeds
        .iter()
        .flat_map(|&s| {
            config
                .kinds
                .iter()
                .enumerate()
                .map(move |(i, &k)| (i, k, s))
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(kind_index, kind, seed)| {
            let init_seed = if config.controlled_init {
                seed
            } else {
                seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    .wrapping_add(kind_index as u64 + 1)
            };
            let mut net = ToyNet::new(&config.net, init_seed)?;
            let labels = gen_labels(&LabelConfig {
                kind,
                seed,
                n_classes: config.net.classes,
            })?;
            let tc = TrainConfig {
                seed,
                ..config.train.clone()
            };
            let report = train(&mut net, train_set, &labels, &tc)?;
            let (test_accuracy, _) = evaluate(&net, test_set, &labels)?;
            Ok(AblationRun {
                kind,
                seed,
                init_checksum: report.init_checksum.clone(),
                train_accuracy: report.final_accuracy(),
                test_accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = config
        .kinds
        .iter()
        .map(|&kind| {
            let accs: Vec<f64> = runs
                .iter()
                .filter(|r| r.kind == kind)
                .map(|r| r.test_accuracy)
                .collect();
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
            AblationRow {
                kind,
                mean,
                std: var.sqrt(),
                n_seeds: accs.len(),
            }
        })
        .collect();
    Ok(AblationTable {
        rows,
        runs,
        controlled_init: config.controlled_init,
        train_checksum: train_set.checksum(),
        test_checksum: test_set.checksum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{gaussian_blobs, BlobSpec};

    fn small() -> AblationConfig {
        AblationConfig {
            seeds: vec![0, 1],
            train: TrainConfig {
                epochs: 3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn one_row_per_kind_with_shared_init() {
        let (tr, te) = gaussian_blobs(&BlobSpec {
            train_per_class: 10,
            test_per_class: 5,
            ..Default::default()
        })
        .unwrap();
        let t = label_config_ablation(&tr, &te, &small()).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.rows.iter().all(|r| r.n_seeds == 2));
        assert_eq!(t.runs.len(), 8);
        assert!(t.init_is_shared());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,mean,std,n_seeds\n"));
        assert_eq!(text.lines().count(), 5);

        let free = label_config_ablation(
            &tr,
            &te,
            &AblationConfig {
                controlled_init: false,
                ..small()
            },
        )
        .unwrap();
        assert!(!free.init_is_shared());
    }

    #[test]
    fn needs_two_seeds() {
        let (tr, te) = gaussian_blobs(&BlobSpec::default()).unwrap();
        let cfg = AblationConfig {
            seeds: vec![0],
            ..small()
        };
        assert!(label_config_ablation(&tr, &te, &cfg).is_err());
    }
}
