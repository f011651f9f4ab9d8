use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{image_likelihood, ClassScore, ClassifierConfig, MemoryBank};
use crate::error::{Error, Result};
use crate::manifest::LabeledMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub truth: u32,
    pub prediction: u32,
    /// Up to three best classes, highest score first.
    pub top: Vec<ClassScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: u32,
    pub queries: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub queries: usize,
    /// Row/column labels of `confusion`.
    pub classes: Vec<u32>,
    /// `confusion[truth][prediction]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassAccuracy>,
    pub predictions: Vec<Prediction>,
    pub config: ClassifierConfig,
}

#[derive(Serialize)]
struct Summary<'a> {
    accuracy: f64,
    queries: usize,
    classes: &'a [u32],
    confusion: &'a [Vec<usize>],
    per_class: &'a [ClassAccuracy],
    config: &'a ClassifierConfig,
}

impl EvalReport {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&Summary {
            accuracy: self.accuracy,
            queries: self.queries,
            classes: &self.classes,
            confusion: &self.confusion,
            per_class: &self.per_class,
            config: &self.config,
        })
        .expect("summary serializes")
    }

    /// One row per query: image_id, truth, prediction, then class/score pairs
    /// for the top three classes (blank when the bank has fewer).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "image_id",
            "truth",
            "prediction",
            "top1_class",
            "top1_score",
            "top2_class",
            "top2_score",
            "top3_class",
            "top3_score",
        ])?;
        for p in &self.predictions {
            let mut row = vec![
                p.image_id.clone(),
                p.truth.to_string(),
                p.prediction.to_string(),
            ];
            for i in 0..3 {
                match p.top.get(i) {
                    Some(s) => {
                        row.push(s.class_id.to_string());
                        row.push(s.score.to_string());
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }
}

/// Classifies every query against `bank`. With `exclude_same_image` set and a
/// bank containing the queries themselves this is leave-one-out evaluation.
pub fn evaluate(
    queries: &[LabeledMap],
    bank: &MemoryBank,
    config: &ClassifierConfig,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::Empty("query set"));
    }
    let predictions = queries
        .par_iter()
        .map(|q| {
            let table = image_likelihood(&q.map, &q.image_id, bank, config)?;
            let mut top = table.ranked();
            top.truncate(3);
            Ok(Prediction {
                image_id: q.image_id.clone(),
                truth: q.class_id,
                prediction: table.best,
                top,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let classes: Vec<u32> = bank
        .class_count()
        .keys()
        .copied()
        .chain(predictions.iter().map(|p| p.truth))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index = |c: u32| classes.binary_search(&c).expect("class listed");
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for p in &predictions {
        confusion[index(p.truth)][index(p.prediction)] += 1;
    }
    let per_class = classes
        .iter()
        .enumerate()
        .filter_map(|(i, &class_id)| {
            let n: usize = confusion[i].iter().sum();
            (n > 0).then(|| ClassAccuracy {
                class_id,
                queries: n,
                correct: confusion[i][i],
                accuracy: confusion[i][i] as f64 / n as f64,
            })
        })
        .collect();
    let correct = predictions
        .iter()
        .filter(|p| p.truth == p.prediction)
        .count();
    Ok(EvalReport {
        accuracy: correct as f64 / predictions.len() as f64,
        queries: predictions.len(),
        classes,
        confusion,
        per_class,
        predictions,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationMap;
    use crate::ann::IndexConfig;

    fn labeled(id: &str, class: u32, v: [f32; 3]) -> LabeledMap {
        LabeledMap {
            image_id: id.into(),
            class_id: class,
            map: ActivationMap::new(1, 1, 3, v.to_vec(), true).unwrap(),
        }
    }

    #[test]
    fn queries_identical_to_memory_score_perfectly() {
        let mem = vec![
            labeled("a", 0, [1.0, 0.0, 0.0]),
            labeled("b", 1, [0.0, 1.0, 0.0]),
            labeled("c", 2, [0.0, 0.0, 1.0]),
        ];
        let bank = MemoryBank::from_maps(&mem, true, IndexConfig::default()).unwrap();
        let cfg = ClassifierConfig {
            exclude_same_image: false,
            k: 1,
            ..Default::default()
        };
        let r = evaluate(&mem, &bank, &cfg).unwrap();
        assert_eq!(r.accuracy, 1.0);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, usize::from(i == j));
            }
        }
        let csv = r.csv_string().unwrap();
        assert!(csv.starts_with("image_id,truth,prediction,top1_class"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn rows_sum_to_query_counts() {
        let mem = vec![
            labeled("a", 0, [1.0, 0.1, 0.0]),
            labeled("b", 0, [1.0, 0.0, 0.1]),
            labeled("c", 1, [0.0, 1.0, 0.0]),
            labeled("d", 1, [0.1, 1.0, 0.0]),
            labeled("e", 1, [1.0, 0.05, 0.05]),
        ];
        let bank = MemoryBank::from_maps(&mem, true, IndexConfig::default()).unwrap();
        let r = evaluate(&mem, &bank, &ClassifierConfig::default()).unwrap();
        assert_eq!(r.confusion[0].iter().sum::<usize>(), 2);
        assert_eq!(r.confusion[1].iter().sum::<usize>(), 3);
        assert!(r.accuracy < 1.0);
        assert!(evaluate(&[], &bank, &ClassifierConfig::default()).is_err());
    }
}
