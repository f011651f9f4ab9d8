use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{rank_order, IndexConfig, Metric, Neighbor, VectorKey};
use crate::error::{Error, Result};

// Random splits are not balanced; this only guards against pathological inputs.
const MAX_DEPTH: usize = 128;
const SPLIT_ATTEMPTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Vec<u32>),
    /// Points with `normal · x - offset > 0` go right. `normal` has unit length.
    Split {
        normal: Vec<f64>,
        offset: f64,
        left: u32,
        right: u32,
    },
}

/// Nodes in pre-order; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(ids) => Some(ids.as_slice()),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpForest {
    pub(crate) config: IndexConfig,
    pub(crate) dim: usize,
    pub(crate) data: Vec<f64>,
    pub(crate) keys: Vec<VectorKey>,
    pub(crate) trees: Vec<Tree>,
}

impl RpForest {
    /// Deterministic in `(entries order, config)`. Trees are built in
    /// parallel, each from its own ChaCha stream.
    pub fn build(entries: Vec<(VectorKey, Vec<f64>)>, config: IndexConfig) -> Result<Self> {
        config.validate()?;
        let dim = entries.first().ok_or(Error::Empty("index input"))?.1.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        let mut data = Vec::with_capacity(entries.len() * dim);
        let mut keys = Vec::with_capacity(entries.len());
        for (key, v) in entries {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.len(),
                });
            }
            if v.iter().any(|a| !a.is_finite()) {
                return Err(Error::NonFinite(keys.len()));
            }
            data.extend_from_slice(&v);
            keys.push(key);
        }
        if keys.len() > u32::MAX as usize {
            return Err(Error::config("too many vectors for a u32 id"));
        }
        let mut forest = Self {
            config,
            dim,
            data,
            keys,
            trees: Vec::new(),
        };
        let trees = (0..forest.config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(forest.config.seed);
                rng.set_stream(t as u64);
                let builder = TreeBuilder {
                    forest: &forest,
                    rng,
                    nodes: Vec::new(),
                };
                builder.build()
            })
            .collect();
        forest.trees = trees;
        Ok(forest)
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn metric(&self) -> Metric {
        self.config.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn keys(&self) -> &[VectorKey] {
        &self.keys
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    /// K nearest stored vectors using the configured search budget.
    pub fn query_knn(
        &self,
        q: &[f64],
        k: usize,
        exclude_image: Option<&str>,
    ) -> Result<Vec<Neighbor>> {
        self.query_knn_with_budget(q, k, exclude_image, self.config.budget_for(k))
    }

    /// Exact search by linear scan. Same result as a traversal whose budget
    /// covers every stored vector, since each tree holds every id.
    pub fn query_knn_exact(
        &self,
        q: &[f64],
        k: usize,
        exclude_image: Option<&str>,
    ) -> Result<Vec<Neighbor>> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        if k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        let all = (0..self.len() as u32)
            .filter(|&id| exclude_image.is_none_or(|x| &*self.keys[id as usize].image_id != x))
            .collect();
        Ok(self.rank(q, all, k))
    }

    pub fn query_knn_with_budget(
        &self,
        q: &[f64],
        k: usize,
        exclude_image: Option<&str>,
        budget: usize,
    ) -> Result<Vec<Neighbor>> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        if k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        if budget < k {
            return Err(Error::config(format!(
                "search budget {budget} is smaller than k = {k}"
            )));
        }
        let excluded =
            |id: u32| exclude_image.is_some_and(|x| &*self.keys[id as usize].image_id == x);
        let mut heap = BinaryHeap::with_capacity(self.trees.len() * 4);
        for t in 0..self.trees.len() {
            heap.push(Frontier {
                priority: f64::INFINITY,
                tree: t as u32,
                node: 0,
            });
        }
        let mut seen = HashSet::new();
        let mut candidates = Vec::with_capacity(budget);
        while candidates.len() < budget {
            let Some(top) = heap.pop() else { break };
            match &self.trees[top.tree as usize].nodes[top.node as usize] {
                Node::Leaf(ids) => {
                    for &id in ids {
                        if !excluded(id) && seen.insert(id) {
                            candidates.push(id);
                        }
                    }
                }
                Node::Split {
                    normal,
                    offset,
                    left,
                    right,
                } => {
                    let margin = self.margin(normal, *offset, q);
                    heap.push(Frontier {
                        priority: top.priority.min(margin),
                        tree: top.tree,
                        node: *right,
                    });
                    heap.push(Frontier {
                        priority: top.priority.min(-margin),
                        tree: top.tree,
                        node: *left,
                    });
                }
            }
        }

        Ok(self.rank(q, candidates, k))
    }

    fn rank(&self, q: &[f64], candidates: Vec<u32>, k: usize) -> Vec<Neighbor> {
        let metric = self.config.metric;
        let mut scored: Vec<(f64, u32)> = candidates
            .into_iter()
            .map(|id| (metric.distance(q, self.vector(id as usize)), id))
            .collect();
        let order = |a: &(f64, u32), b: &(f64, u32)| {
            rank_order(
                &(a.0, &self.keys[a.1 as usize]),
                &(b.0, &self.keys[b.1 as usize]),
            )
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        scored
            .into_iter()
            .map(|(distance, id)| Neighbor {
                id: id as usize,
                key: self.keys[id as usize].clone(),
                distance,
            })
            .collect()
    }

    /// The representation splits are computed in: raw vectors for Euclidean,
    /// directions for cosine.
    fn margin(&self, normal: &[f64], offset: f64, v: &[f64]) -> f64 {
        match self.config.metric {
            Metric::Euclidean => dot(normal, v) - offset,
            Metric::Cosine => {
                let n = dot(v, v).sqrt();
                let d = dot(normal, v);
                (if n == 0.0 { d } else { d / n }) - offset
            }
        }
    }

    fn split_space(&self, v: &[f64]) -> Vec<f64> {
        match self.config.metric {
            Metric::Euclidean => v.to_vec(),
            Metric::Cosine => unit(v),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|a| a / n).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Frontier {
    priority: f64,
    tree: u32,
    node: u32,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Max-heap on priority; lower (tree, node) wins ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.tree.cmp(&self.tree))
            .then_with(|| other.node.cmp(&self.node))
    }
}

struct TreeBuilder<'a> {
    forest: &'a RpForest,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build(mut self) -> Tree {
        let ids: Vec<u32> = (0..self.forest.len() as u32).collect();
        self.grow(ids, 0);
        Tree { nodes: self.nodes }
    }

    fn point(&self, id: u32) -> Vec<f64> {
        self.forest.split_space(self.forest.vector(id as usize))
    }

    fn grow(&mut self, ids: Vec<u32>, depth: usize) -> u32 {
        let at = self.nodes.len() as u32;
        if ids.len() <= self.forest.config.leaf_size || depth >= MAX_DEPTH {
            self.nodes.push(Node::Leaf(ids));
            return at;
        }
        let Some((normal, offset)) = self.pick_hyperplane(&ids) else {
            // every point identical
            self.nodes.push(Node::Leaf(ids));
            return at;
        };
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for &id in &ids {
            if self
                .forest
                .margin(&normal, offset, self.forest.vector(id as usize))
                > 0.0
            {
                hi.push(id);
            } else {
                lo.push(id);
            }
        }
        if lo.is_empty() || hi.is_empty() {
            self.nodes.push(Node::Leaf(ids));
            return at;
        }
        self.nodes.push(Node::Leaf(Vec::new()));
        let left = self.grow(lo, depth + 1);
        let right = self.grow(hi, depth + 1);
        self.nodes[at as usize] = Node::Split {
            normal,
            offset,
            left,
            right,
        };
        at
    }

    /// Perpendicular bisector of two distinct sampled points.
    fn pick_hyperplane(&mut self, ids: &[u32]) -> Option<(Vec<f64>, f64)> {
        let n = ids.len();
        for _ in 0..SPLIT_ATTEMPTS {
            let i = self.rng.random_range(0..n);
            let mut j = self.rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            if let Some(h) = self.bisector(ids[i], ids[j]) {
                return Some(h);
            }
        }
        // Sampling kept hitting duplicates; fall back to the first point that
        // differs from ids[0], if there is one.
        let anchor = ids[0];
        ids[1..]
            .iter()
            .find_map(|&other| self.bisector(anchor, other))
    }

    fn bisector(&self, a: u32, b: u32) -> Option<(Vec<f64>, f64)> {
        let (pa, pb) = (self.point(a), self.point(b));
        let mut normal: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
        let len = dot(&normal, &normal).sqrt();
        if len == 0.0 || !len.is_finite() {
            return None;
        }
        normal.iter_mut().for_each(|v| *v /= len);
        let offset = normal
            .iter()
            .zip(pa.iter().zip(&pb))
            .map(|(n, (x, y))| n * (x + y) * 0.5)
            .sum();
        Some((normal, offset))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::brute_force_knn;

    fn random_entries(n: usize, dim: usize, seed: u64) -> Vec<(VectorKey, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let v = (0..dim).map(|_| rng.random::<f64>()).collect();
                (
                    VectorKey::new(&format!("img{:04}", i / 7), i % 7, 0, (i % 3) as u32),
                    v,
                )
            })
            .collect()
    }

    fn ids_of(r: &[Neighbor]) -> Vec<usize> {
        r.iter().map(|n| n.id).collect()
    }

    #[test]
    fn single_vector_forest() {
        let e = vec![(VectorKey::new("only", 0, 0, 3), vec![1.0, 2.0])];
        let f = RpForest::build(e, IndexConfig::default()).unwrap();
        for q in [[0.0, 0.0], [100.0, -3.0]] {
            let r = f.query_knn(&q, 5, None).unwrap();
            assert_eq!(r.len(), 1);
            assert_eq!(&*r[0].key.image_id, "only");
        }
    }

    #[test]
    fn orthonormal_basis_lookup() {
        let e = (0..3)
            .map(|i| {
                let mut v = vec![0.0; 3];
                v[i] = 1.0;
                (VectorKey::new(&format!("e{}", i + 1), 0, 0, i as u32), v)
            })
            .collect();
        let f = RpForest::build(e, IndexConfig::default()).unwrap();
        let r = f.query_knn(&[1.0, 0.0, 0.0], 1, None).unwrap();
        assert_eq!(&*r[0].key.image_id, "e1");
        assert_eq!(r[0].distance, 0.0);
    }

    #[test]
    fn equidistant_tie_uses_key_order() {
        let e = vec![
            (VectorKey::new("b", 0, 0, 0), vec![1.0, 0.0]),
            (VectorKey::new("a", 0, 1, 1), vec![-1.0, 0.0]),
            (VectorKey::new("a", 0, 0, 1), vec![0.0, 5.0]),
        ];
        let f = RpForest::build(e, IndexConfig::default()).unwrap();
        let r = f.query_knn_exact(&[0.0, 0.0], 2, None).unwrap();
        assert_eq!(r[0].key, VectorKey::new("a", 0, 1, 1));
        assert_eq!(r[1].key, VectorKey::new("b", 0, 0, 0));
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            RpForest::build(vec![], IndexConfig::default()),
            Err(Error::Empty(_))
        ));
        let mixed = vec![
            (VectorKey::new("a", 0, 0, 0), vec![1.0, 2.0]),
            (VectorKey::new("b", 0, 0, 0), vec![1.0]),
        ];
        assert!(matches!(
            RpForest::build(mixed, IndexConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let f = RpForest::build(random_entries(10, 4, 1), IndexConfig::default()).unwrap();
        assert!(matches!(
            f.query_knn(&[0.0; 3], 1, None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(f.query_knn_with_budget(&[0.0; 4], 5, None, 4).is_err());
    }

    #[test]
    fn every_vector_in_exactly_one_leaf_per_tree() {
        let f = RpForest::build(random_entries(500, 8, 2), IndexConfig::default()).unwrap();
        for tree in f.trees() {
            let mut seen = vec![0u32; f.len()];
            for leaf in tree.leaves() {
                for &id in leaf {
                    seen[id as usize] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn depth_is_logarithmic_with_slack() {
        let cfg = IndexConfig {
            leaf_size: 10,
            ..Default::default()
        };
        let f = RpForest::build(random_entries(2000, 16, 3), cfg).unwrap();
        let ideal = (2000f64 / 10.0).log2().ceil() as usize;
        for tree in f.trees() {
            assert!(tree.depth() <= 3 * ideal + 8, "depth {}", tree.depth());
        }
    }

    #[test]
    fn identical_points_become_one_leaf() {
        let e = (0..50)
            .map(|i| (VectorKey::new("dup", i, 0, 0), vec![0.5, 0.5, 0.5]))
            .collect();
        let cfg = IndexConfig {
            leaf_size: 2,
            ..Default::default()
        };
        let f = RpForest::build(e, cfg).unwrap();
        for t in f.trees() {
            assert_eq!(t.nodes.len(), 1);
        }
        let r = f.query_knn(&[0.5, 0.5, 0.5], 3, None).unwrap();
        assert_eq!(
            r.iter().map(|n| n.key.row).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn rebuild_is_node_identical() {
        let cfg = IndexConfig {
            seed: 99,
            ..Default::default()
        };
        let a = RpForest::build(random_entries(300, 6, 4), cfg.clone()).unwrap();
        let b = RpForest::build(random_entries(300, 6, 4), cfg).unwrap();
        assert_eq!(a.trees, b.trees);
        let c = RpForest::build(
            random_entries(300, 6, 4),
            IndexConfig {
                seed: 100,
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn full_budget_matches_brute_force() {
        let entries = random_entries(500, 12, 5);
        let (keys, vecs): (Vec<_>, Vec<_>) = entries.iter().cloned().unzip();
        let f = RpForest::build(entries, IndexConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let q: Vec<f64> = (0..12).map(|_| rng.random()).collect();
            let exclude = Some("img0003");
            let got = f.query_knn_with_budget(&q, 10, exclude, f.len()).unwrap();
            let want = brute_force_knn(&keys, &vecs, Metric::Euclidean, &q, 10, exclude).unwrap();
            assert_eq!(ids_of(&got), ids_of(&want));
            assert_eq!(f.query_knn_exact(&q, 10, exclude).unwrap(), got);
            assert!(got.iter().all(|n| &*n.key.image_id != "img0003"));
        }
    }

    #[test]
    fn cosine_and_euclidean_rank_unit_vectors_alike() {
        let mut entries = random_entries(400, 10, 7);
        for (_, v) in entries.iter_mut() {
            let n = dot(v, v).sqrt();
            v.iter_mut().for_each(|a| *a /= n);
        }
        let eu = RpForest::build(entries.clone(), IndexConfig::default()).unwrap();
        let co = RpForest::build(
            entries,
            IndexConfig {
                metric: Metric::Cosine,
                ..Default::default()
            },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q = unit(&(0..10).map(|_| rng.random::<f64>()).collect::<Vec<_>>());
            let a = eu.query_knn_exact(&q, 10, None).unwrap();
            let b = co.query_knn_exact(&q, 10, None).unwrap();
            assert_eq!(ids_of(&a), ids_of(&b));
        }
    }
}
