//! File artifacts: 8-bit PGM heatmaps with a JSON scaling sidecar, and
//! bundling of run outputs into one directory with an index.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a heatmap's values were mapped onto 0..=255.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapScale {
    pub file: String,
    pub height: usize,
    pub width: usize,
    pub min: f64,
    pub max: f64,
}

/// Binary P5 image, min-max scaled. A constant grid encodes as all zeros.
pub fn encode_pgm(values: &[f64], height: usize, width: usize) -> Result<(Vec<u8>, f64, f64)> {
    if height == 0 || width == 0 {
        return Err(Error::ZeroDimension {
            height,
            width,
            channels: 1,
        });
    }
    if values.len() != height * width {
        return Err(Error::DimensionMismatch {
            expected: height * width,
            actual: values.len(),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if span > 0.0 {
            (255.0 * (v - min) / span).round() as u8
        } else {
            0
        }
    }));
    Ok((out, min, max))
}

/// Writes `<dir>/<name>.pgm` and `<dir>/<name>.json`.
pub fn write_heatmap(
    dir: impl AsRef<Path>,
    name: &str,
    values: &[f64],
    height: usize,
    width: usize,
) -> Result<HeatmapScale> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let (bytes, min, max) = encode_pgm(values, height, width)?;
    let file = format!("{name}.pgm");
    fs::write(dir.join(&file), bytes)?;
    let scale = HeatmapScale {
        file,
        height,
        width,
        min,
        max,
    };
    fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&scale)?,
    )?;
    Ok(scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    /// Path inside the bundle, relative to its root.
    pub file: String,
    pub source: PathBuf,
    pub kind: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleIndex {
    pub entries: Vec<BundleEntry>,
}

const BUNDLED: [&str; 4] = ["csv", "pgm", "json", "jsonl"];

/// Copies the CSV, PGM and JSON files found directly inside each input
/// directory (or given as files) into `out/<input name>/`, and writes
/// `out/index.json` listing them in sorted order.
pub fn bundle(inputs: &[PathBuf], out: impl AsRef<Path>) -> Result<BundleIndex> {
    let out = out.as_ref();
    if inputs.is_empty() {
        return Err(Error::Empty("report inputs"));
    }
    fs::create_dir_all(out)?;
    let mut entries = Vec::new();
    for input in inputs {
        let files: Vec<PathBuf> = if input.is_dir() {
            let mut v: Vec<_> = fs::read_dir(input)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            v.retain(|p| p.is_file());
            v
        } else {
            vec![input.clone()]
        };
        let group = input
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        let group = if input.is_dir() {
            group
        } else {
            input
                .parent()
                .and_then(Path::file_name)
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "files".into())
        };
        for f in files {
            let Some(ext) = f.extension().and_then(|e| e.to_str()) else {
                continue;
            };
            if !BUNDLED.contains(&ext) {
                continue;
            }
            let name = f.file_name().expect("file has a name").to_string_lossy();
            let rel = format!("{group}/{name}");
            fs::create_dir_all(out.join(&group))?;
            let bytes = fs::copy(&f, out.join(&rel))?;
            entries.push(BundleEntry {
                file: rel,
                source: f.clone(),
                kind: ext.to_string(),
                bytes,
            });
        }
    }
    entries.sort_by(|a, b| a.file.cmp(&b.file));
    let index = BundleIndex { entries };
    fs::write(
        out.join("index.json"),
        serde_json::to_string_pretty(&index)?,
    )?;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_scaling() {
        let (bytes, min, max) = encode_pgm(&[1.0, 2.0, 3.0, 5.0, 1.0, 1.0], 2, 3).unwrap();
        assert_eq!((min, max), (1.0, 5.0));
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 64, 128, 255, 0, 0]);
        let (flat, _, _) = encode_pgm(&[2.0; 4], 2, 2).unwrap();
        assert!(flat[flat.len() - 4..].iter().all(|&b| b == 0));
        assert!(encode_pgm(&[1.0], 1, 2).is_err());
        assert!(encode_pgm(&[f64::NAN], 1, 1).is_err());
    }

    #[test]
    fn heatmap_and_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("run1");
        let s = write_heatmap(&run, "energy", &[0.0, 1.0, 2.0, 3.0], 2, 2).unwrap();
        assert_eq!(s.max, 3.0);
        fs::write(run.join("stats.csv"), "a,b\n1,2\n").unwrap();
        fs::write(run.join("notes.txt"), "skip").unwrap();
        let out = dir.path().join("bundle");
        let idx = bundle(&[run], &out).unwrap();
        let files: Vec<_> = idx.entries.iter().map(|e| e.file.as_str()).collect();
        assert_eq!(
            files,
            ["run1/energy.json", "run1/energy.pgm", "run1/stats.csv"]
        );
        assert!(out.join("index.json").exists());
        assert_eq!(fs::read(out.join("run1/energy.pgm")).unwrap().len(), 11 + 4);
    }
}
