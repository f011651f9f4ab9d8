//! U1IX index files.
//!
//! ```text
//! "U1IX" | version u32 | n_trees u32 | leaf_size u32 | seed u64 | metric u8
//!        | has_budget u8 | budget u64 | dim u32 | n u32
//! per tree:   node_count u32, nodes in pre-order
//!             leaf  = 0u8, len u32, ids u32 × len
//!             split = 1u8, offset f64, normal f64 × dim   (then left, right)
//! per vector: id_len u32, image_id utf-8, row u32, col u32, class_id u32,
//!             values f64 × dim
//! ```
//!
//! Little-endian throughout. Vectors are stored as `f64`, so a reloaded index
//! answers queries bit-identically.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{IndexConfig, Metric, Node, RpForest, Tree, VectorKey};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: [u8; 4] = *b"U1IX";
pub const INDEX_VERSION: u32 = 1;

impl RpForest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(self.data.len() * 8 * 2);
        w.extend_from_slice(&INDEX_MAGIC);
        put_u32(&mut w, INDEX_VERSION);
        put_u32(&mut w, self.config.n_trees as u32);
        put_u32(&mut w, self.config.leaf_size as u32);
        w.extend_from_slice(&self.config.seed.to_le_bytes());
        w.push(self.config.metric.code());
        w.push(u8::from(self.config.search_budget.is_some()));
        w.extend_from_slice(&(self.config.search_budget.unwrap_or(0) as u64).to_le_bytes());
        put_u32(&mut w, self.dim as u32);
        put_u32(&mut w, self.keys.len() as u32);
        for tree in &self.trees {
            put_u32(&mut w, tree.nodes.len() as u32);
            write_node(&mut w, &tree.nodes, 0);
        }
        for (id, key) in self.keys.iter().enumerate() {
            put_u32(&mut w, key.image_id.len() as u32);
            w.extend_from_slice(key.image_id.as_bytes());
            put_u32(&mut w, key.row);
            put_u32(&mut w, key.col);
            put_u32(&mut w, key.class_id);
            for v in self.vector(id) {
                w.extend_from_slice(&v.to_le_bytes());
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != INDEX_MAGIC {
            return Err(Error::BadMagic {
                expected: INDEX_MAGIC,
                found: magic,
            });
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n_trees = r.u32()? as usize;
        let leaf_size = r.u32()? as usize;
        let seed = r.u64()?;
        let metric = Metric::from_code(r.u8()?)
            .ok_or_else(|| Error::MalformedIndex("unknown metric code".into()))?;
        let has_budget = r.u8()? != 0;
        let budget = r.u64()? as usize;
        let config = IndexConfig {
            n_trees,
            leaf_size,
            seed,
            metric,
            search_budget: has_budget.then_some(budget),
        };
        config.validate()?;
        let dim = r.u32()? as usize;
        let n = r.u32()? as usize;
        if dim == 0 || n == 0 {
            return Err(Error::MalformedIndex("empty index".into()));
        }

        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let count = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(count.min(1 << 20));
            read_node(&mut r, &mut nodes, dim, n)?;
            if nodes.len() != count {
                return Err(Error::MalformedIndex(format!(
                    "tree declares {count} nodes but holds {}",
                    nodes.len()
                )));
            }
            trees.push(Tree { nodes });
        }

        let mut keys = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::MalformedIndex("image_id is not utf-8".into()))?
                .to_owned();
            let (row, col, class_id) = (r.u32()?, r.u32()?, r.u32()?);
            keys.push(VectorKey {
                image_id: id.into(),
                row,
                col,
                class_id,
            });
            for _ in 0..dim {
                data.push(r.f64()?);
            }
        }
        if r.at != bytes.len() {
            return Err(Error::MalformedIndex("trailing bytes".into()));
        }
        Ok(RpForest {
            config,
            dim,
            data,
            keys,
            trees,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn write_node(w: &mut Vec<u8>, nodes: &[Node], at: usize) {
    match &nodes[at] {
        Node::Leaf(ids) => {
            w.push(0);
            put_u32(w, ids.len() as u32);
            for id in ids {
                put_u32(w, *id);
            }
        }
        Node::Split {
            normal,
            offset,
            left,
            right,
        } => {
            w.push(1);
            w.extend_from_slice(&offset.to_le_bytes());
            for v in normal {
                w.extend_from_slice(&v.to_le_bytes());
            }
            write_node(w, nodes, *left as usize);
            write_node(w, nodes, *right as usize);
        }
    }
}

fn read_node(r: &mut Reader<'_>, nodes: &mut Vec<Node>, dim: usize, n: usize) -> Result<u32> {
    let at = nodes.len() as u32;
    match r.u8()? {
        0 => {
            let len = r.u32()? as usize;
            let mut ids = Vec::with_capacity(len.min(n));
            for _ in 0..len {
                let id = r.u32()?;
                if id as usize >= n {
                    return Err(Error::MalformedIndex(format!("leaf id {id} out of range")));
                }
                ids.push(id);
            }
            nodes.push(Node::Leaf(ids));
        }
        1 => {
            let offset = r.f64()?;
            let normal = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            nodes.push(Node::Leaf(Vec::new()));
            let left = read_node(r, nodes, dim, n)?;
            let right = read_node(r, nodes, dim, n)?;
            nodes[at as usize] = Node::Split {
                normal,
                offset,
                left,
                right,
            };
        }
        tag => return Err(Error::MalformedIndex(format!("unknown node tag {tag}"))),
    }
    Ok(at)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Truncated {
                expected: self.at.saturating_add(n),
                actual: self.bytes.len(),
            })?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn persisted_index_answers_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let entries: Vec<_> = (0..300)
            .map(|i| {
                let v = (0..5).map(|_| rng.random::<f64>()).collect();
                (
                    VectorKey::new(&format!("im{}", i / 9), i % 9, i % 3, (i % 4) as u32),
                    v,
                )
            })
            .collect();
        let cfg = IndexConfig {
            n_trees: 5,
            metric: Metric::Cosine,
            search_budget: Some(40),
            ..Default::default()
        };
        let forest = RpForest::build(entries, cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.u1ix");
        forest.save(&path).unwrap();
        let back = RpForest::load(&path).unwrap();
        assert_eq!(back, forest);
        for _ in 0..20 {
            let q: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            assert_eq!(
                forest.query_knn(&q, 7, Some("im3")).unwrap(),
                back.query_knn(&q, 7, Some("im3")).unwrap()
            );
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let entries = vec![(VectorKey::new("a", 0, 0, 0), vec![1.0, 2.0])];
        let bytes = RpForest::build(entries, IndexConfig::default())
            .unwrap()
            .to_bytes();
        assert!(matches!(
            RpForest::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(
            RpForest::from_bytes(&bad),
            Err(Error::BadMagic { .. })
        ));
        let mut long = bytes;
        long.push(0);
        assert!(RpForest::from_bytes(&long).is_err());
    }
}
