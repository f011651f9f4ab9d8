//! Property tests for invariants that hold across modules.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use u1sym_core::activation::{assemble_map, energy_map, pixel_vectors, ActivationMap};
use u1sym_core::amf::{decode_activation_map, encode_activation_map};
use u1sym_core::ann::{brute_force_knn, IndexConfig, Metric, RpForest, VectorKey};
use u1sym_core::classifier::{image_likelihood, ClassifierConfig, MemoryBank};
use u1sym_core::manifest::LabeledMap;
use u1sym_core::symmetry::{
    aggregate_energy, conditional_match_distribution, match_histogram, MatchPoint,
};
use u1sym_core::trainer::{cosine_lr, gen_labels, LabelConfig, LabelKind};

fn random_map(h: usize, w: usize, c: usize, seed: u64, lo: f32) -> ActivationMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ActivationMap::from_fn(h, w, c, lo >= 0.0, |_, _, _| rng.random_range(lo..1.0)).unwrap()
}

fn labeled(id: &str, class: u32, map: ActivationMap) -> LabeledMap {
    LabeledMap {
        image_id: id.to_string(),
        class_id: class,
        map,
    }
}

fn memory(n: usize, classes: u32, seed: u64) -> Vec<LabeledMap> {
    (0..n)
        .map(|i| {
            labeled(
                &format!("m{i:03}"),
                i as u32 % classes,
                random_map(2, 2, 4, seed + i as u64, 0.05),
            )
        })
        .collect()
}

fn scores(t: &u1sym_core::classifier::LikelihoodTable) -> Vec<(u32, f64)> {
    t.scores.iter().map(|s| (s.class_id, s.score)).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_ignores_channel_order(h in 1usize..5, w in 1usize..5, c in 1usize..7, seed: u64, rot in 0usize..7) {
        let m = random_map(h, w, c, seed, -1.0);
        let rot = rot % c;
        let p = ActivationMap::from_fn(h, w, c, false, |r, col, k| m.get(r, col, (k + rot) % c)).unwrap();
        let (a, b) = (energy_map(&m), energy_map(&p));
        for (x, y) in a.cells.iter().zip(&b.cells) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn energy_total_is_sum_of_squares(h in 1usize..6, w in 1usize..6, c in 1usize..9, seed: u64) {
        let m = random_map(h, w, c, seed, -1.0);
        let direct: f64 = m.values().iter().map(|&v| f64::from(v).powi(2)).sum();
        prop_assert!(close(energy_map(&m).total(), direct, 1e-12));
    }

    #[test]
    fn pixel_vectors_reassemble_exactly(h in 1usize..5, w in 1usize..5, c in 1usize..6, seed: u64) {
        let m = random_map(h, w, c, seed, -1.0);
        let pv = pixel_vectors(&m, "x", 0, false).unwrap();
        prop_assert_eq!(assemble_map(&pv, h, w, false).unwrap(), m);
    }

    #[test]
    fn unit_vectors_link_distance_and_dot(c in 2usize..16, seed: u64) {
        let m = random_map(1, 2, c, seed, 0.01);
        let pv = pixel_vectors(&m, "x", 0, true).unwrap();
        let (a, b) = (&pv[0].v, &pv[1].v);
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        prop_assert!((d2 - (2.0 - 2.0 * dot)).abs() <= 1e-6);
    }

    #[test]
    fn amf_round_trip(h in 1usize..5, w in 1usize..5, c in 1usize..6, seed: u64) {
        let m = random_map(h, w, c, seed, -2.0);
        prop_assert_eq!(decode_activation_map(&encode_activation_map(&m)).unwrap(), m);
    }

    #[test]
    fn full_budget_traversal_is_exact(n in 20usize..200, d in 2usize..10, seed: u64, k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<_> = (0..n)
            .map(|i| (VectorKey::new(&format!("i{}", i / 4), i % 4, 0, (i % 3) as u32),
                      (0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
            .collect();
        let (keys, vecs): (Vec<_>, Vec<_>) = entries.iter().cloned().unzip();
        let f = RpForest::build(entries, IndexConfig { n_trees: 4, leaf_size: 3, seed, ..Default::default() }).unwrap();
        let q: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let got = f.query_knn_with_budget(&q, k, Some("i1"), n).unwrap();
        let want = brute_force_knn(&keys, &vecs, Metric::Euclidean, &q, k, Some("i1")).unwrap();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn metrics_rank_unit_vectors_alike(n in 5usize..80, d in 2usize..8, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let keys: Vec<_> = (0..n).map(|i| VectorKey::new("m", i, 0, 0)).collect();
        let vecs: Vec<_> = (0..n).map(|_| unit(&mut rng)).collect();
        let q = unit(&mut rng);
        let a = brute_force_knn(&keys, &vecs, Metric::Euclidean, &q, n, None).unwrap();
        let b = brute_force_knn(&keys, &vecs, Metric::Cosine, &q, n, None).unwrap();
        let ka: Vec<_> = a.iter().map(|x| x.id).collect();
        let kb: Vec<_> = b.iter().map(|x| x.id).collect();
        prop_assert_eq!(ka, kb);
    }

    #[test]
    fn forest_is_deterministic(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<_> = (0..150)
            .map(|i| (VectorKey::new("m", i, 0, 0), (0..6).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
            .collect();
        let cfg = IndexConfig { n_trees: 6, seed, ..Default::default() };
        let a = RpForest::build(entries.clone(), cfg.clone()).unwrap();
        let b = RpForest::build(entries, cfg).unwrap();
        let q: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        prop_assert_eq!(a.query_knn(&q, 5, None).unwrap(), b.query_knn(&q, 5, None).unwrap());
    }

    #[test]
    fn likelihood_ignores_memory_order(seed: u64, shift in 1usize..11) {
        let mem = memory(12, 3, seed);
        let mut rotated = mem.clone();
        rotated.rotate_left(shift);
        let cfg = ClassifierConfig { exact: true, k: 5, ..Default::default() };
        let q = random_map(2, 2, 4, seed ^ 0xabc, 0.05);
        let a = image_likelihood(&q, "q", &MemoryBank::from_maps(&mem, true, IndexConfig::default()).unwrap(), &cfg).unwrap();
        let b = image_likelihood(&q, "q", &MemoryBank::from_maps(&rotated, true, IndexConfig::default()).unwrap(), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn duplicating_a_class_keeps_its_score(seed: u64, class in 0u32..3) {
        let mem = memory(9, 3, seed);
        let mut doubled = mem.clone();
        doubled.extend(mem.iter().filter(|m| m.class_id == class).map(|m| labeled(&format!("dup-{}", m.image_id), class, m.map.clone())));
        // K covers the whole bank, so every neighbour's copy is retrieved too
        let q = random_map(2, 2, 4, seed ^ 0x55, 0.05);
        let run = |maps: &[LabeledMap]| {
            let bank = MemoryBank::from_maps(maps, true, IndexConfig::default()).unwrap();
            let cfg = ClassifierConfig { exact: true, k: bank.len(), ..Default::default() };
            image_likelihood(&q, "q", &bank, &cfg).unwrap()
        };
        let (a, b) = (run(&mem), run(&doubled));
        prop_assert!(close(a.score(class).unwrap(), b.score(class).unwrap(), 1e-9));
    }

    #[test]
    fn scaling_leaves_table_unchanged_without_epsilon(seed: u64, s in 0.05f64..20.0) {
        let mem = memory(10, 2, seed);
        let q = random_map(2, 2, 4, seed ^ 0x77, 0.05);
        let scale = |m: &ActivationMap| ActivationMap::from_fn(2, 2, 4, true, |r, c, k| (f64::from(m.get(r, c, k)) * s) as f32).unwrap();
        let cfg = ClassifierConfig { exact: true, epsilon: 0.0, normalize_vectors: false, k: 6, ..Default::default() };
        let run = |maps: &[LabeledMap], q: &ActivationMap, cfg: &ClassifierConfig| {
            let bank = MemoryBank::from_maps(maps, false, IndexConfig::default()).unwrap();
            image_likelihood(q, "q", &bank, cfg).unwrap()
        };
        let scaled: Vec<_> = mem.iter().map(|m| labeled(&m.image_id, m.class_id, scale(&m.map))).collect();
        let (a, b) = (run(&mem, &q, &cfg), run(&scaled, &scale(&q), &cfg));
        for ((ca, sa), (cb, sb)) in scores(&a).into_iter().zip(scores(&b)) {
            prop_assert_eq!(ca, cb);
            // f32 storage of the scaled maps limits agreement
            prop_assert!(close(sa, sb, 1e-4), "{} vs {}", sa, sb);
        }
        prop_assert_eq!(a.best, b.best);
    }

    #[test]
    fn conditionals_rebuild_the_match_histogram(seed: u64, n in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (3usize, 4usize);
        let loc = |rng: &mut ChaCha8Rng| {
            let (r, c) = (rng.random_range(0..h), rng.random_range(0..w));
            u1sym_core::activation::centered_coords(r, c, h, w)
        };
        let pts: Vec<MatchPoint> = (0..n).map(|_| {
            let (a, b) = (loc(&mut rng), loc(&mut rng));
            MatchPoint { query_class: 0, memory_class: 0, xi: a.0, yi: a.1, x_nn: b.0, y_nn: b.1, same_class: true, weight: 1.0 }
        }).collect();
        let total = match_histogram(&pts, h, w);
        let mut acc = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let hist = conditional_match_distribution(&pts, u1sym_core::activation::centered_coords(r, c, h, w), h, w);
                for (a, p) in acc.iter_mut().zip(&hist.probs) {
                    *a += hist.n as f64 * p;
                }
            }
        }
        for (a, t) in acc.iter().zip(total) {
            prop_assert!((a - t as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_of_identical_maps_is_the_map(n in 1usize..6, seed: u64) {
        let m = random_map(3, 3, 4, seed, -1.0);
        let maps = vec![m.clone(); n];
        let s = aggregate_energy(&maps).unwrap();
        for (a, b) in s.mean.cells.iter().zip(energy_map(&m).cells) {
            prop_assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn cosine_schedule_never_rises(total in 1usize..400, lr0 in 1e-5f64..1.0, frac in 0.0f64..1.0) {
        let lr_min = lr0 * frac;
        let lrs: Vec<_> = (0..=total).map(|t| cosine_lr(t, total, lr0, lr_min)).collect();
        prop_assert_eq!(lrs[0], lr0);
        prop_assert_eq!(lrs[total], lr_min);
        prop_assert!(lrs.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn labels_are_deterministic_and_unit(seed: u64, n in 1usize..64, kind in prop::sample::select(LabelKind::ALL.to_vec())) {
        let cfg = LabelConfig { kind, seed, n_classes: n };
        let a = gen_labels(&cfg).unwrap();
        prop_assert_eq!(&a, &gen_labels(&cfg).unwrap());
        if kind == LabelKind::UnitCircle {
            prop_assert!(a.labels.iter().all(|l| (l.x * l.x + l.y * l.y - 1.0).abs() <= 1e-9));
        }
    }
}

#[test]
fn default_epsilon_keeps_argmax_under_scaling() {
    for seed in 0..10u64 {
        let mem = memory(10, 3, seed);
        let q = random_map(2, 2, 4, seed + 100, 0.05);
        let cfg = ClassifierConfig {
            exact: true,
            normalize_vectors: false,
            k: 6,
            ..Default::default()
        };
        let best = |s: f64| {
            let scale = |m: &ActivationMap| {
                ActivationMap::from_fn(2, 2, 4, true, |r, c, k| {
                    (f64::from(m.get(r, c, k)) * s) as f32
                })
                .unwrap()
            };
            let maps: Vec<_> = mem
                .iter()
                .map(|m| labeled(&m.image_id, m.class_id, scale(&m.map)))
                .collect();
            let bank = MemoryBank::from_maps(&maps, false, IndexConfig::default()).unwrap();
            image_likelihood(&scale(&q), "q", &bank, &cfg).unwrap().best
        };
        let base = best(1.0);
        for s in [0.5, 0.75, 1.5, 2.0] {
            assert_eq!(best(s), base, "seed {seed}, scale {s}");
        }
    }
}

#[test]
fn power_of_two_scaling_is_bit_exact_without_epsilon() {
    // scaling by 2^k is exact in f32 and f64, so d²/α² is unchanged bit for bit
    for seed in 0..5u64 {
        let mem = memory(10, 2, seed);
        let q = random_map(2, 2, 4, seed + 50, 0.05);
        let cfg = ClassifierConfig {
            exact: true,
            epsilon: 0.0,
            normalize_vectors: false,
            k: 6,
            ..Default::default()
        };
        let table = |s: f32| {
            let scale = |m: &ActivationMap| {
                ActivationMap::from_fn(2, 2, 4, true, |r, c, k| m.get(r, c, k) * s).unwrap()
            };
            let maps: Vec<_> = mem
                .iter()
                .map(|m| labeled(&m.image_id, m.class_id, scale(&m.map)))
                .collect();
            let bank = MemoryBank::from_maps(&maps, false, IndexConfig::default()).unwrap();
            image_likelihood(&scale(&q), "q", &bank, &cfg).unwrap()
        };
        let base = table(1.0);
        for s in [0.25, 0.5, 2.0, 8.0] {
            assert_eq!(table(s), base, "seed {seed}, scale {s}");
        }
    }
}
