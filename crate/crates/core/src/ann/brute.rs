use super::{rank_order, Metric, Neighbor, VectorKey};
use crate::error::{Error, Result};

/// Exact K-NN by full scan with the same `(distance, key)` tie rule as the
/// forest. `keys[i]` labels `vectors[i]`; result ids index into both.
pub fn brute_force_knn(
    keys: &[VectorKey],
    vectors: &[Vec<f64>],
    metric: Metric,
    q: &[f64],
    k: usize,
    exclude_image: Option<&str>,
) -> Result<Vec<Neighbor>> {
    if keys.len() != vectors.len() {
        return Err(Error::DimensionMismatch {
            expected: keys.len(),
            actual: vectors.len(),
        });
    }
    let mut scored = Vec::with_capacity(vectors.len());
    for (id, (key, v)) in keys.iter().zip(vectors).enumerate() {
        if v.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: v.len(),
                actual: q.len(),
            });
        }
        if exclude_image.is_some_and(|x| &*key.image_id == x) {
            continue;
        }
        scored.push((metric.distance(q, v), id));
    }
    scored.sort_by(|a, b| rank_order(&(a.0, &keys[a.1]), &(b.0, &keys[b.1])));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(distance, id)| Neighbor {
            id,
            key: keys[id].clone(),
            distance,
        })
        .collect())
}
