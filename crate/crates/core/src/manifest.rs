//! JSON-lines manifest: one labeled AMF file per line.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activation::ActivationMap;
use crate::amf::load_activation_map;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Memory,
    Query,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub path: PathBuf,
    pub image_id: String,
    pub class_id: u32,
    pub class_name: String,
    pub split: Split,
}

/// Parses manifest text. Relative paths are resolved against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: Option<&Path>) -> Result<Vec<MemoryRecord>> {
    let mut records = Vec::new();
    let mut ids = HashSet::new();
    let mut names: HashMap<u32, (String, usize)> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: MemoryRecord = serde_json::from_str(line).map_err(|e| Error::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        if !ids.insert(rec.image_id.clone()) {
            return Err(Error::Manifest {
                line: line_no,
                message: format!("duplicate image_id {:?}", rec.image_id),
            });
        }
        match names.get(&rec.class_id) {
            Some((name, first)) if *name != rec.class_name => {
                return Err(Error::Manifest {
                    line: line_no,
                    message: format!(
                        "class_id {} named {:?} here but {:?} on line {}",
                        rec.class_id, rec.class_name, name, first
                    ),
                })
            }
            Some(_) => {}
            None => {
                names.insert(rec.class_id, (rec.class_name.clone(), line_no));
            }
        }
        if let Some(base) = base_dir {
            if rec.path.is_relative() {
                rec.path = base.join(&rec.path);
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<MemoryRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_manifest(&text, path.parent())
}

pub fn write_manifest(records: &[MemoryRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for rec in records {
        serde_json::to_writer(&mut file, rec)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// A loaded, labeled activation map.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMap {
    pub image_id: String,
    pub class_id: u32,
    pub map: ActivationMap,
}

pub fn load_records(records: &[MemoryRecord]) -> Result<Vec<LabeledMap>> {
    records
        .iter()
        .map(|r| {
            Ok(LabeledMap {
                image_id: r.image_id.clone(),
                class_id: r.class_id,
                map: load_activation_map(&r.path)?,
            })
        })
        .collect()
}
