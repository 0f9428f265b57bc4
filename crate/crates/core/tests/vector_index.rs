use proptest::prelude::*;
use tdf_core::vector::{assign_nearest, build_kmeans, FlatIndex, IvfIndex};
use tdf_core::{cosine_similarity, Embedding, IndexMode, IndexParams, KnowledgeItem, TrustedEntry, VectorIndex};

fn unit(v: Vec<f64>) -> Embedding {
    Embedding::normalize(v).unwrap()
}

fn entries(vectors: &[Vec<f64>]) -> Vec<TrustedEntry> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| TrustedEntry::new(KnowledgeItem::new(format!("e{i:05}"), "x", None).unwrap(), unit(v.clone())))
        .collect()
}

/// Linear scan written independently of the index: plain dot products,
/// ties to the smallest id.
fn brute_force(entries: &[TrustedEntry], q: &[f64]) -> Option<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    for e in entries {
        let s: f64 = e.vector.as_slice().iter().zip(q).map(|(a, b)| a * b).sum();
        let s = s.clamp(-1.0, 1.0);
        let id = e.item.id().to_string();
        best = match best {
            Some((bid, bs)) if bs > s || (bs == s && bid < id) => Some((bid, bs)),
            _ => Some((id, s)),
        };
    }
    best
}

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flat_search_matches_linear_scan(
        data in prop::collection::vec(vec_strategy(8), 1..60),
        queries in prop::collection::vec(vec_strategy(8), 1..10),
    ) {
        let es = entries(&data);
        let mut flat = FlatIndex::new(8);
        for e in es.clone() {
            flat.insert(e).unwrap();
        }
        for q in queries {
            let q = unit(q);
            let (got, sim) = flat.search_top1(&q).unwrap().unwrap();
            let (want, want_sim) = brute_force(&es, q.as_slice()).unwrap();
            prop_assert_eq!(got.item.id(), want.as_str());
            prop_assert_eq!(sim, want_sim);
        }
    }

    #[test]
    fn ivf_full_probe_equals_flat_and_recall_is_monotone(
        data in prop::collection::vec(vec_strategy(6), 8..80),
        queries in prop::collection::vec(vec_strategy(6), 1..8),
        nlist in 1usize..8,
        seed in any::<u64>(),
    ) {
        let es = entries(&data);
        let params = IndexParams { mode: IndexMode::Ivf, nlist: Some(nlist), nprobe: nlist, seed, ..Default::default() };
        let ivf = IvfIndex::build(6, es.clone(), &params).unwrap();
        let mut flat = FlatIndex::new(6);
        for e in es {
            flat.insert(e).unwrap();
        }
        for q in queries {
            let q = unit(q);
            let exact = flat.search_top1(&q).unwrap().unwrap();
            let full = ivf.search_top1_probing(&q, ivf.nlist()).unwrap().unwrap();
            prop_assert_eq!(exact.0.item.id(), full.0.item.id());
            let mut previous = f64::NEG_INFINITY;
            for probes in 1..=ivf.nlist() {
                let (_, sim) = ivf.search_top1_probing(&q, probes).unwrap().unwrap();
                prop_assert!(sim >= previous);
                previous = sim;
            }
        }
    }

    #[test]
    fn inserts_are_conserved_and_unit(
        data in prop::collection::vec(vec_strategy(5), 1..70),
    ) {
        for mode in [IndexMode::Flat, IndexMode::Ivf] {
            let mut idx = VectorIndex::new(5, &IndexParams { mode, ..Default::default() }).unwrap();
            for (k, e) in entries(&data).into_iter().enumerate() {
                idx.insert(e).unwrap();
                prop_assert_eq!(idx.len(), k + 1);
            }
            if let VectorIndex::Ivf(ivf) = &idx {
                prop_assert_eq!(ivf.buckets().iter().map(Vec::len).sum::<usize>(), data.len());
            }
            for e in idx.entries() {
                let norm: f64 = e.vector.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cosine_stays_in_range(a in vec_strategy(7), b in vec_strategy(7)) {
        let s = cosine_similarity(&unit(a.clone()), &unit(b)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(cosine_similarity(&unit(a.clone()), &unit(a)).unwrap() > 0.999_999, true);
    }
}

#[test]
fn ivf_buckets_hold_nearest_centroid_after_build() {
    let data: Vec<Vec<f64>> = (0..200)
        .map(|i| {
            let t = i as f64 * 0.37;
            vec![t.cos(), t.sin(), (t * 0.5).cos(), 0.2]
        })
        .collect();
    let params = IndexParams { mode: IndexMode::Ivf, nlist: Some(9), ..Default::default() };
    let ivf = IvfIndex::build(4, entries(&data), &params).unwrap();
    for (b, bucket) in ivf.buckets().iter().enumerate() {
        for &i in bucket {
            let v = &ivf.entries()[i].vector;
            let sims: Vec<f64> = ivf.centroids().iter().map(|c| cosine_similarity(v, c).unwrap()).collect();
            let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(sims[b], best);
            assert_eq!(assign_nearest(v, ivf.centroids()), b);
        }
    }
}

/// Spherical k-means objective of a partition: sum over clusters of the norm
/// of the member sum (the total cosine to each cluster's mean direction).
fn objective(points: &[Embedding], mask: u32) -> f64 {
    let dim = points[0].dim();
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    for (i, p) in points.iter().enumerate() {
        let side = ((mask >> i) & 1) as usize;
        for (s, x) in sums[side].iter_mut().zip(p.as_slice()) {
            *s += x;
        }
    }
    sums.iter().map(|s| s.iter().map(|x| x * x).sum::<f64>().sqrt()).sum()
}

#[test]
fn two_antipodal_groups_match_best_partition() {
    let jitter = [0.05, -0.03, 0.02, -0.06, 0.04];
    let mut points = Vec::new();
    for (k, j) in jitter.iter().enumerate() {
        points.push(unit(vec![1.0, *j, 0.01 * k as f64]));
    }
    for (k, j) in jitter.iter().enumerate() {
        points.push(unit(vec![-1.0, *j * 0.5, -0.02 * k as f64]));
    }
    // exhaustive search over all 2-partitions with both sides non-empty
    let best_mask = (1u32..(1 << 10) - 1)
        .max_by(|&a, &b| objective(&points, a).total_cmp(&objective(&points, b)))
        .unwrap();
    let best_groups: Vec<u32> = (0..10).map(|i| (best_mask >> i) & 1).collect();
    assert!(best_groups[..5].iter().all(|&g| g == best_groups[0]));
    assert!(best_groups[5..].iter().all(|&g| g != best_groups[0]));

    for seed in 0..10 {
        let centroids = build_kmeans(&points, 2, seed, 50).unwrap();
        let labels: Vec<usize> = points.iter().map(|p| assign_nearest(p, &centroids)).collect();
        for i in 0..10 {
            for j in 0..10 {
                assert_eq!(labels[i] == labels[j], best_groups[i] == best_groups[j], "seed {seed}");
            }
        }
    }
}
