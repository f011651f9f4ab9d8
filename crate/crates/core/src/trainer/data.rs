use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Labeled row vectors; `image` is set when each row is an H×W image.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<u32>,
    pub n_classes: usize,
    pub image: Option<(usize, usize)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if self.inputs.len() != self.len() * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.len() * self.dim,
                actual: self.inputs.len(),
            });
        }
        if let Some(&c) = self.targets.iter().find(|&&c| c as usize >= self.n_classes) {
            return Err(Error::UnknownClass(c));
        }
        Ok(())
    }

    /// SHA-256 over inputs and targets, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.inputs {
            h.update(v.to_le_bytes());
        }
        for t in &self.targets {
            h.update(t.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of the class centers around the origin.
    pub separation: f64,
    /// Standard deviation of samples around their center.
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: 8,
            dim: 16,
            train_per_class: 50,
            test_per_class: 50,
            separation: 1.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

/// Isotropic Gaussian clusters, one per class; returns (train, test) drawn
/// around the same centers.
pub fn gaussian_blobs(spec: &BlobSpec) -> Result<(Dataset, Dataset)> {
    if spec.classes == 0 || spec.dim == 0 || spec.train_per_class == 0 {
        return Err(Error::config(
            "blob dataset needs classes, dim and train samples",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    spec.separation * z
                })
                .collect()
        })
        .collect();
    let mut draw = |per_class: usize| {
        let mut inputs = Vec::with_capacity(per_class * spec.classes * spec.dim);
        let mut targets = Vec::with_capacity(per_class * spec.classes);
        for _ in 0..per_class {
            for (c, center) in centers.iter().enumerate() {
                for &m in center {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    inputs.push(m + spec.noise * z);
                }
                targets.push(c as u32);
            }
        }
        Dataset {
            dim: spec.dim,
            inputs,
            targets,
            n_classes: spec.classes,
            image: None,
        }
    };
    let train = draw(spec.train_per_class);
    let test = draw(spec.test_per_class);
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub classes: usize,
    pub per_class: usize,
    pub size: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for ImageSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 32,
            size: 16,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Horizontal stripes whose spatial frequency encodes the class, at a random
/// phase. Horizontal flips and small shifts keep the class.
pub fn image_grid(spec: &ImageSpec) -> Result<Dataset> {
    if spec.classes == 0 || spec.per_class == 0 || spec.size == 0 {
        return Err(Error::config(
            "image dataset needs classes, samples and a size",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.size;
    let mut inputs = Vec::with_capacity(spec.classes * spec.per_class * s * s);
    let mut targets = Vec::new();
    for _ in 0..spec.per_class {
        for c in 0..spec.classes {
            let phase = rng.random_range(0.0..TAU);
            let freq = (c + 1) as f64 / s as f64;
            for r in 0..s {
                let base = 0.5 + 0.5 * (TAU * freq * r as f64 + phase).cos();
                for _ in 0..s {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    inputs.push(base + spec.noise * z);
                }
            }
            targets.push(c as u32);
        }
    }
    Ok(Dataset {
        dim: s * s,
        inputs,
        targets,
        n_classes: spec.classes,
        image: Some((s, s)),
    })
}

/// Random horizontal flip, then a random shift of up to `pad` pixels with
/// zero fill (a padded random crop).
pub fn augment(img: &mut [f64], height: usize, width: usize, pad: usize, rng: &mut ChaCha8Rng) {
    debug_assert_eq!(img.len(), height * width);
    if rng.random_bool(0.5) {
        for row in img.chunks_exact_mut(width) {
            row.reverse();
        }
    }
    let p = pad as i64;
    let dy = rng.random_range(-p..=p);
    let dx = rng.random_range(-p..=p);
    if dx == 0 && dy == 0 {
        return;
    }
    let src = img.to_vec();
    for r in 0..height as i64 {
        for c in 0..width as i64 {
            let (sr, sc) = (r + dy, c + dx);
            img[(r * width as i64 + c) as usize] =
                if sr < 0 || sc < 0 || sr >= height as i64 || sc >= width as i64 {
                    0.0
                } else {
                    src[(sr * width as i64 + sc) as usize]
                };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_shape_and_determinism() {
        let spec = BlobSpec::default();
        let (tr, te) = gaussian_blobs(&spec).unwrap();
        assert_eq!(tr.len(), 400);
        assert_eq!(te.len(), 400);
        tr.validate().unwrap();
        assert_eq!(tr, gaussian_blobs(&spec).unwrap().0);
        assert_ne!(tr.checksum(), te.checksum());
    }

    #[test]
    fn image_grid_rows_are_stripes() {
        let d = image_grid(&ImageSpec {
            noise: 0.0,
            ..Default::default()
        })
        .unwrap();
        d.validate().unwrap();
        let img = d.row(0);
        for r in 0..16 {
            let row = &img[r * 16..(r + 1) * 16];
            assert!(row.iter().all(|&v| v == row[0]));
        }
    }

    #[test]
    fn augmentation_preserves_mass_up_to_the_crop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut img: Vec<f64> = (0..16).map(f64::from).collect();
        let sum: f64 = img.iter().sum();
        augment(&mut img, 4, 4, 0, &mut rng);
        assert_eq!(img.iter().sum::<f64>(), sum);
        let mut flipped = 0;
        for _ in 0..50 {
            let mut x: Vec<f64> = (0..16).map(f64::from).collect();
            augment(&mut x, 4, 4, 0, &mut rng);
            flipped += usize::from(x[0] == 3.0);
        }
        assert!(flipped > 10 && flipped < 40);
        let mut shifted = vec![1.0; 16];
        augment(&mut shifted, 4, 4, 1, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(shifted.iter().sum::<f64>() <= 16.0);
    }
}
