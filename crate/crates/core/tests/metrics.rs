mod common;

use std::collections::BTreeMap;

use common::{rng, unit_rows};
use nnn_core::diagnostics::{hub_report, matched_counts, MatchedCounts};
use nnn_core::embed_io::{Attribute, AttributeLabels, CandidateLabel};
use nnn_core::evaluation::{
    attribute_bias, bootstrap_ci, nested_subsets, recall_at_k, sweep_nnn, EvalData,
};
use nnn_core::synthetic::{hub_benchmark, HubConfig};
use nnn_core::{GroundTruth, RankingTable, SearchHit};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_table(seed: u64, queries: usize, cands: usize, depth: usize) -> RankingTable {
    let mut r = rng(seed);
    let rows = (0..queries)
        .map(|_| {
            let mut ids: Vec<usize> = (0..cands).collect();
            ids.shuffle(&mut r);
            ids.truncate(depth);
            ids.iter().enumerate().map(|(i, &c)| SearchHit::new(c, -(i as f64))).collect()
        })
        .collect();
    RankingTable::new(rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matched_counts_sum_to_queries(seed in any::<u64>(), q in 0usize..200, c in 1usize..50) {
        let t = random_table(seed, q, c, 1);
        let m = matched_counts(&t, c).unwrap();
        prop_assert_eq!(m.counts.iter().sum::<u64>(), q as u64);
        prop_assert_eq!(m.total_queries, q as u64);
    }

    #[test]
    fn hub_stats_ignore_candidate_order(counts in prop::collection::vec(0u64..50, 2..60), seed in any::<u64>()) {
        prop_assume!(counts.iter().any(|&c| c != counts[0]));
        let mut permuted = counts.clone();
        permuted.shuffle(&mut rng(seed));
        let total = counts.iter().sum();
        let a = hub_report(&MatchedCounts { counts, total_queries: total }).unwrap();
        let b = hub_report(&MatchedCounts { counts: permuted, total_queries: total }).unwrap();
        prop_assert!((a.kurtosis - b.kurtosis).abs() <= 1e-9 * a.kurtosis.abs().max(1.0));
        prop_assert!((a.mae - b.mae).abs() <= 1e-9 * a.mae.max(1.0));
        prop_assert_eq!(a.max, b.max);
    }

    #[test]
    fn recall_never_drops_as_k_grows(seed in any::<u64>(), q in 1usize..80) {
        let t = random_table(seed, q, 30, 30);
        let mut r = rng(seed ^ 1);
        let truth = GroundTruth::from_pairs((0..q).flat_map(|i| {
            let n = r.random_range(1..4);
            (0..n).map(|_| (i, r.random_range(0..30))).collect::<Vec<_>>()
        }));
        let mut prev = 0.0;
        for k in 1..=30 {
            let v = recall_at_k(&t, &truth, k).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn bootstrap_is_seeded_and_brackets_the_mean(
        hits in prop::collection::vec(any::<bool>(), 1..300),
        seed in any::<u64>(),
    ) {
        let a = bootstrap_ci(&hits, 200, seed, 0.95).unwrap();
        let b = bootstrap_ci(&hits, 200, seed, 0.95).unwrap();
        prop_assert_eq!(a, b);
        let mean = hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
        prop_assert!(a.0 <= mean && mean <= a.1);
    }

    #[test]
    fn ablation_subsets_are_nested(n in 1usize..2000, seed in any::<u64>()) {
        let fr = [0.1, 0.2, 0.5, 1.0];
        prop_assume!(n >= 10);
        let subsets = nested_subsets(n, &fr, seed).unwrap();
        for w in subsets.windows(2) {
            prop_assert!(w[0].iter().all(|i| w[1].binary_search(i).is_ok()));
        }
        prop_assert_eq!(subsets[3].len(), n);
    }

    #[test]
    fn attribute_bias_is_bounded_and_flips_sign(seed in any::<u64>(), n in 1usize..10) {
        let t = random_table(seed, 25, 12, 10);
        let mut r = rng(seed ^ 7);
        let labels = AttributeLabels::new(
            (0..12)
                .map(|c| {
                    let attribute = if r.random_bool(0.5) { Attribute::A } else { Attribute::B };
                    (c, CandidateLabel { attribute, group: None })
                })
                .collect::<BTreeMap<_, _>>(),
        );
        let a = attribute_bias(&t, &labels, n, None).unwrap();
        let b = attribute_bias(&t, &labels.flipped(), n, None).unwrap();
        for (x, y) in a.per_query.iter().zip(&b.per_query) {
            prop_assert!((-1.0..=1.0).contains(x));
            prop_assert_eq!(*x, -*y);
        }
    }
}

#[test]
fn sweep_covers_grid_and_picks_the_rescanned_best() {
    let b = hub_benchmark(&HubConfig { n_ref: 400, n_test: 150, ..HubConfig::default() }).unwrap();
    let alphas = [0.0, 0.5, 1.0, 1.5];
    let ks = [1, 4, 16, 64, 4096];
    let res = sweep_nnn(
        EvalData {
            queries: &b.queries,
            candidates: &b.candidates,
            ref_queries: &b.ref_queries,
            truth: &b.truth,
        },
        &b.ref_truth,
        &alphas,
        &ks,
        3,
    )
    .unwrap();
    assert_eq!(res.grid.len(), alphas.len() * ks.len());
    let mut best = res.grid[0];
    for c in &res.grid[1..] {
        if c.recall_at_1 > best.recall_at_1 {
            best = *c;
        }
    }
    assert_eq!((res.best.alpha, res.best.k), (best.alpha, best.k));
    // alpha = 0 cells all reproduce the raw held-out recall.
    for c in res.grid.iter().filter(|c| c.alpha == 0.0) {
        assert_eq!(c.recall_at_1, res.heldout_raw_recall_at_1);
    }
}

#[test]
fn ablation_rows_follow_fractions() {
    let mut r = rng(8);
    let cands = unit_rows(&mut r, 30, 8);
    let queries = unit_rows(&mut r, 20, 8);
    let refs = unit_rows(&mut r, 100, 8);
    let truth = GroundTruth::from_pairs((0..20).map(|q| (q, q)));
    let report = nnn_core::evaluation::ablate_reference(
        EvalData { queries: &queries, candidates: &cands, ref_queries: &refs, truth: &truth },
        None,
        &[0.1, 0.5, 1.0],
        &nnn_core::NormalizationSpec::Nnn { alpha: 0.5, k: 4 },
        1,
        &[1, 5],
    )
    .unwrap();
    let sizes: Vec<usize> = report.rows.iter().map(|r| r.n_refs).collect();
    assert_eq!(sizes, vec![10, 50, 100]);
}
