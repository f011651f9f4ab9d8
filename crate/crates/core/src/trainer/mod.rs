//! Toy-scale training with a combined objective: cross-entropy on the class
//! head plus λ times the squared distance between a 2-D head and a per-class
//! target point.

mod ablation;
mod data;
mod labels;
mod net;
mod optim;

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ablation::{
    label_config_ablation, AblationConfig, AblationRow, AblationRun, AblationTable,
};
pub use data::{augment, gaussian_blobs, image_grid, BlobSpec, Dataset, ImageSpec};
pub use labels::{gen_labels, LabelConfig, LabelKind, LabelSet, U1Label};
pub use net::{
    backward, combined_loss, forward, loss, Dense, ForwardCache, ForwardPass, LossTerms, NetConfig,
    Objective, ToyNet,
};
pub use optim::{cosine_lr, Adam, AdamConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub batch: usize,
    /// Seeds the per-epoch shuffle and augmentation.
    pub seed: u64,
    pub lambda: f64,
    /// Train the class head alone; the u1 head receives no gradient.
    pub one_hot_only: bool,
    /// Flip/shift augmentation; only applies to image datasets.
    pub augment: bool,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            lr_min: 0.0,
            batch: 32,
            seed: 0,
            lambda: 1.0,
            one_hot_only: false,
            augment: false,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::config("lambda must be finite and >= 0"));
        }
        if !self.lr.is_finite()
            || self.lr <= 0.0
            || self.lr_min.is_nan()
            || self.lr_min < 0.0
            || self.lr_min > self.lr
        {
            return Err(Error::config("need lr > 0 and 0 <= lr_min <= lr"));
        }
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::config("epochs and batch must be >= 1"));
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        if self.one_hot_only {
            Objective::OneHot
        } else {
            Objective::Combined {
                lambda: self.lambda,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub ce: f64,
    pub u1: f64,
    pub accuracy: f64,
    /// Mean angle between the u1 output and the target point, over samples
    /// whose target is not the origin.
    pub angular_error_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub init_checksum: String,
    pub final_checksum: String,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.accuracy)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_metrics_csv(&self.metrics, out)
    }
}

pub fn write_metrics_csv<W: Write>(metrics: &[EpochMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "epoch",
        "lr",
        "total",
        "ce",
        "u1",
        "accuracy",
        "angular_error_deg",
    ])?;
    for m in metrics {
        w.write_record([
            m.epoch.to_string(),
            m.lr.to_string(),
            m.total.to_string(),
            m.ce.to_string(),
            m.u1.to_string(),
            m.accuracy.to_string(),
            m.angular_error_deg
                .map(|a| a.to_string())
                .unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Accuracy and mean angular error of `net` on `data`.
pub fn evaluate(net: &ToyNet, data: &Dataset, labels: &LabelSet) -> Result<(f64, Option<f64>)> {
    data.validate()?;
    let f = forward(net, &data.inputs, data.len())?;
    let c = net.classes();
    let mut correct = 0usize;
    let (mut err_sum, mut err_n) = (0.0, 0usize);
    for (s, &t) in data.targets.iter().enumerate() {
        let row = &f.logits[s * c..(s + 1) * c];
        let pred = row
            .iter()
            .enumerate()
            .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
        correct += usize::from(pred == t as usize);
        let label = labels.get(t)?;
        let (px, py) = (f.u1[2 * s], f.u1[2 * s + 1]);
        if (label.x, label.y) != (0.0, 0.0) && (px, py) != (0.0, 0.0) {
            let d = (py.atan2(px) - label.y.atan2(label.x) + PI).rem_euclid(TAU) - PI;
            err_sum += d.abs().to_degrees();
            err_n += 1;
        }
    }
    let acc = correct as f64 / data.len() as f64;
    Ok((acc, (err_n > 0).then(|| err_sum / err_n as f64)))
}

/// Mini-batch Adam training with a cosine-annealed learning rate per epoch.
/// Single-threaded and deterministic given `net`, `data` and `config.seed`.
pub fn train(
    net: &mut ToyNet,
    data: &Dataset,
    labels: &LabelSet,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    data.validate()?;
    if data.dim != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: data.dim,
        });
    }
    if labels.n_classes() < data.n_classes || net.classes() < data.n_classes {
        return Err(Error::UnknownClass(data.n_classes as u32 - 1));
    }
    let targets = labels.coords();
    let objective = config.objective();
    let init_checksum = net.checksum();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(net, config.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr, config.lr_min);
        order.shuffle(&mut rng);
        let (mut total, mut ce, mut u1) = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(config.batch).enumerate() {
            let mut x = Vec::with_capacity(chunk.len() * data.dim);
            for &i in chunk {
                let start = x.len();
                x.extend_from_slice(data.row(i));
                if let (true, Some((h, w))) = (config.augment, data.image) {
                    augment(&mut x[start..], h, w, 2, &mut rng);
                }
            }
            let y: Vec<u32> = chunk.iter().map(|&i| data.targets[i]).collect();
            let f = forward(net, &x, chunk.len()).map_err(|e| diverged(e, epoch, b))?;
            let l = loss(&f.logits, &f.u1, &y, &targets, objective)
                .map_err(|e| diverged(e, epoch, b))?;
            let grads = backward(net, &f.cache, &l.grad_logits, &l.grad_u1)?;
            adam.step(net, &grads, lr);
            let w = chunk.len() as f64;
            total += l.total * w;
            ce += l.ce * w;
            u1 += l.u1 * w;
        }
        if !net.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite parameters after epoch {epoch}"
            )));
        }
        let (accuracy, angular_error_deg) = evaluate(net, data, labels)?;
        let n = data.len() as f64;
        metrics.push(EpochMetrics {
            epoch,
            lr,
            total: total / n,
            ce: ce / n,
            u1: u1 / n,
            accuracy,
            angular_error_deg,
        });
    }
    Ok(TrainReport {
        metrics,
        init_checksum,
        final_checksum: net.checksum(),
    })
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(kind: LabelKind) -> (ToyNet, Dataset, LabelSet) {
        let (train, _) = gaussian_blobs(&BlobSpec {
            train_per_class: 20,
            ..Default::default()
        })
        .unwrap();
        let net = ToyNet::new(
            &NetConfig {
                input: 16,
                hidden: vec![32],
                classes: 8,
                u1_layers: 1,
            },
            7,
        )
        .unwrap();
        let labels = gen_labels(&LabelConfig {
            kind,
            seed: 1,
            n_classes: 8,
        })
        .unwrap();
        (net, train, labels)
    }

    #[test]
    fn learns_blobs() {
        let (mut net, data, labels) = setup(LabelKind::UnitCircle);
        let cfg = TrainConfig {
            epochs: 30,
            ..Default::default()
        };
        let r = train(&mut net, &data, &labels, &cfg).unwrap();
        assert!(r.final_accuracy() >= 0.95, "{}", r.final_accuracy());
        assert!(r.metrics[29].u1 < r.metrics[0].u1);
        assert_eq!(r.metrics[0].lr, 0.01);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 31);
    }

    #[test]
    fn zero_lambda_matches_one_hot_bit_for_bit() {
        let (net, data, labels) = setup(LabelKind::UnitCircle);
        let base = TrainConfig {
            epochs: 5,
            lambda: 0.0,
            ..Default::default()
        };
        let (mut a, mut b) = (net.clone(), net);
        train(&mut a, &data, &labels, &base).unwrap();
        train(
            &mut b,
            &data,
            &labels,
            &TrainConfig {
                one_hot_only: true,
                ..base
            },
        )
        .unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn deterministic() {
        let (net, data, labels) = setup(LabelKind::Discrete);
        let cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let (mut a, mut b) = (net.clone(), net);
        let ra = train(&mut a, &data, &labels, &cfg).unwrap();
        let rb = train(&mut b, &data, &labels, &cfg).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut net, data, labels) = setup(LabelKind::UnitCircle);
        net.class_head.w[0] = f64::INFINITY;
        let err = train(&mut net, &data, &labels, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)), "{err}");
    }

    #[test]
    fn centered_labels_have_no_angular_error() {
        let (net, data, labels) = setup(LabelKind::Centered);
        assert_eq!(evaluate(&net, &data, &labels).unwrap().1, None);
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                lambda: -1.0,
                ..Default::default()
            },
            TrainConfig {
                lr: 0.0,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
