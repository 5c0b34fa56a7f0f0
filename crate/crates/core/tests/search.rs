mod common;

use std::collections::BTreeSet;

use common::{arc, naive_dot, naive_top_k, rng, unit_rows};
use nnn_core::vector_index::IndexKind;
use nnn_core::{IvfParams, VectorIndex};
use rand::Rng;

fn ivf_params(ncentroids: usize, seed: u64) -> IvfParams {
    IvfParams {
        ncentroids: Some(ncentroids),
        seed,
        ..IvfParams::default()
    }
}

#[test]
fn exact_search_matches_double_loop() {
    let mut r = rng(1);
    for trial in 0..12 {
        let rows = r.random_range(1..1000);
        let dim = r.random_range(1..64);
        let base = unit_rows(&mut r, rows, dim);
        let queries = unit_rows(&mut r, 5, dim);
        let k = r.random_range(1..20);
        let index = VectorIndex::build_exact(arc(base.clone()));
        for q in queries.iter_rows() {
            let scores: Vec<f64> = base.iter_rows().map(|b| naive_dot(q, b)).collect();
            let want = naive_top_k(&scores, k);
            let got: Vec<(usize, f64)> = index
                .search(q, k, 1)
                .unwrap()
                .into_iter()
                .map(|h| (h.candidate, h.score))
                .collect();
            assert_eq!(got, want, "trial {trial}");
        }
    }
}

#[test]
fn exact_search_breaks_ties_by_index() {
    let base = nnn_core::EmbeddingMatrix::new(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0], false).unwrap();
    let index = VectorIndex::build_exact(arc(base));
    let hits = index.search(&[1.0, 0.0], 3, 1).unwrap();
    assert_eq!(hits.iter().map(|h| h.candidate).collect::<Vec<_>>(), vec![0, 2, 3]);
}

#[test]
fn ivf_lists_partition_the_rows() {
    let mut r = rng(2);
    let base = unit_rows(&mut r, 700, 16);
    let index = VectorIndex::build_ivf(arc(base), &ivf_params(20, 5)).unwrap();
    let IndexKind::Ivf(layout) = index.kind() else { panic!("expected IVF") };
    assert_eq!(layout.lists.len(), 20);
    let mut all: Vec<usize> = layout.lists.iter().flatten().copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..700).collect::<Vec<_>>());
}

#[test]
fn ivf_probing_every_list_equals_exact() {
    let mut r = rng(3);
    for seed in 0..20 {
        let rows = r.random_range(50..600);
        let dim = r.random_range(2..32);
        let nc = r.random_range(1..30);
        let base = arc(unit_rows(&mut r, rows, dim));
        let queries = unit_rows(&mut r, 10, dim);
        let exact = VectorIndex::build_exact(base.clone());
        let ivf = VectorIndex::build_ivf(base, &ivf_params(nc, seed)).unwrap();
        let a = exact.batch_search(&queries, 10, 1).unwrap();
        let b = ivf.batch_search(&queries, 10, nc).unwrap();
        assert_eq!(a, b, "instance {seed}");
    }
}

#[test]
fn ivf_recall_floor_on_gaussian_data() {
    let mut r = rng(4);
    let base = arc(unit_rows(&mut r, 1000, 32));
    let queries = unit_rows(&mut r, 500, 32);
    let exact = VectorIndex::build_exact(base.clone());
    let ivf = VectorIndex::build_ivf(base, &ivf_params(32, 42)).unwrap();
    let a = exact.batch_search(&queries, 1, 1).unwrap();
    let b = ivf.batch_search(&queries, 1, 8).unwrap();
    let agree = (0..queries.rows()).filter(|&q| a.top1(q) == b.top1(q)).count();
    let rate = agree as f64 / queries.rows() as f64;
    // Held-out isotropic queries: a well-converged k-means with 8 of 32 lists
    // probed lands near 0.8 here, so that is the floor.
    assert!(rate >= 0.75, "top-1 agreement {rate}");
}

#[test]
fn more_probes_never_lose_overlap() {
    let mut r = rng(5);
    let base = arc(unit_rows(&mut r, 800, 24));
    let queries = unit_rows(&mut r, 60, 24);
    let exact = VectorIndex::build_exact(base.clone()).batch_search(&queries, 10, 1).unwrap();
    let ivf = VectorIndex::build_ivf(base, &ivf_params(28, 9)).unwrap();
    let overlap = |nprobe: usize| -> Vec<usize> {
        let t = ivf.batch_search(&queries, 10, nprobe).unwrap();
        (0..queries.rows())
            .map(|q| {
                let want: BTreeSet<usize> = exact.hits(q).iter().map(|h| h.candidate).collect();
                t.hits(q).iter().filter(|h| want.contains(&h.candidate)).count()
            })
            .collect()
    };
    let mut prev = overlap(1);
    for nprobe in 2..=28 {
        let cur = overlap(nprobe);
        for (q, (a, b)) in prev.iter().zip(&cur).enumerate() {
            assert!(b >= a, "query {q}: overlap fell from {a} to {b} at nprobe {nprobe}");
        }
        prev = cur;
    }
    assert!(prev.iter().all(|&o| o == 10));
}

#[test]
fn batch_search_is_schedule_independent() {
    let mut r = rng(6);
    let base = arc(unit_rows(&mut r, 900, 40));
    let queries = unit_rows(&mut r, 200, 40);
    let index = VectorIndex::build_ivf(base, &ivf_params(30, 1)).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = single.install(|| index.batch_search(&queries, 7, 5).unwrap());
    let b = many.install(|| index.batch_search(&queries, 7, 5).unwrap());
    assert_eq!(a.to_jsonl(), b.to_jsonl());
}
