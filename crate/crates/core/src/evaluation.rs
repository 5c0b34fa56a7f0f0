//! Retrieval metrics, bootstrap intervals, the NNN hyperparameter sweep,
//! reference-set ablation and attribute-bias measurements.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::embed_io::{AttributeLabels, Attribute, EmbeddingMatrix, GroundTruth, QueryGroups};
use crate::error::{Error, Result};
use crate::normalization::{
    apply, score_matrix, ApplyOptions, NormalizationSpec, ReferenceNeighbors, References,
};
pub use crate::ranking::RankingTable;
use crate::vector_index::VectorIndex;

pub const DEFAULT_K_LIST: [usize; 3] = [1, 5, 10];
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

/// `{0.25, 0.375, ..., 1.5}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| 0.25 + 0.125 * i as f64).collect()
}

/// `{1, 2, 4, ..., 512}`.
pub fn default_k_grid() -> Vec<usize> {
    (0..=9).map(|i| 1usize << i).collect()
}

/// Per query, whether any ground-truth candidate is in its top `k`.
pub fn per_query_hits(table: &RankingTable, truth: &GroundTruth, k: usize) -> Result<Vec<bool>> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    (0..table.len())
        .map(|q| {
            let correct = truth.get(q).ok_or(Error::MissingTruth(q))?;
            Ok(table.hits(q).iter().take(k).any(|h| correct.contains(&h.candidate)))
        })
        .collect()
}

pub fn recall_at_k(table: &RankingTable, truth: &GroundTruth, k: usize) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::EmptyInput("ranking table has no queries"));
    }
    let hits = per_query_hits(table, truth, k)?;
    Ok(mean_of(&hits))
}

fn mean_of(hits: &[bool]) -> f64 {
    hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64
}

/// Linear-interpolated quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Percentile bootstrap interval for the mean of `hits`, resampling queries
/// with replacement. The interval is widened if needed to contain the point
/// estimate.
pub fn bootstrap_ci(hits: &[bool], resamples: usize, seed: u64, level: f64) -> Result<(f64, f64)> {
    if hits.is_empty() {
        return Err(Error::EmptyInput("bootstrap needs at least one observation"));
    }
    if resamples == 0 {
        return Err(Error::InvalidParameter("resamples must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must be in (0, 1), got {level}")));
    }
    let n = hits.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let count = (0..n).filter(|_| hits[rng.random_range(0..n)]).count();
            count as f64 / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let point = mean_of(hits);
    let lo = quantile_sorted(&means, tail).min(point);
    let hi = quantile_sorted(&means, 1.0 - tail).max(point);
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: DEFAULT_RESAMPLES,
            level: DEFAULT_LEVEL,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallReport {
    pub r_at: BTreeMap<usize, f64>,
    pub ci: BTreeMap<usize, (f64, f64)>,
    pub n_queries: usize,
    pub method: Option<NormalizationSpec>,
}

/// Recall at each K with bootstrap intervals.
pub fn recall_report(
    table: &RankingTable,
    truth: &GroundTruth,
    ks: &[usize],
    bootstrap: &BootstrapConfig,
    method: Option<NormalizationSpec>,
) -> Result<RecallReport> {
    if table.is_empty() {
        return Err(Error::EmptyInput("ranking table has no queries"));
    }
    let mut r_at = BTreeMap::new();
    let mut ci = BTreeMap::new();
    for &k in ks {
        let hits = per_query_hits(table, truth, k)?;
        r_at.insert(k, mean_of(&hits));
        ci.insert(
            k,
            bootstrap_ci(&hits, bootstrap.resamples, bootstrap.seed, bootstrap.level)?,
        );
    }
    Ok(RecallReport {
        r_at,
        ci,
        n_queries: table.len(),
        method,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub k: usize,
    pub recall_at_1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestCell {
    pub alpha: f64,
    pub k: usize,
}

/// Test-set R@1 of the raw ranking and of the selected cell, using the full
/// reference pool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepTestEval {
    pub raw_recall_at_1: f64,
    pub best_recall_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Held-out R@1 per `(alpha, k)`, alpha-major.
    pub grid: Vec<SweepCell>,
    pub best: BestCell,
    pub split_seed: u64,
    pub heldout_size: usize,
    pub heldout_raw_recall_at_1: f64,
    pub test: SweepTestEval,
}

/// Inputs shared by the sweep and the ablation.
#[derive(Debug, Clone, Copy)]
pub struct EvalData<'a> {
    pub queries: &'a EmbeddingMatrix,
    pub candidates: &'a EmbeddingMatrix,
    pub ref_queries: &'a EmbeddingMatrix,
    pub truth: &'a GroundTruth,
}

/// Fraction of queries whose best candidate under `score - bias` is correct.
fn recall_at_1_debiased(scores: &[Vec<f64>], bias: &[f32], truth: &GroundTruth) -> Result<f64> {
    let hits = scores
        .par_iter()
        .enumerate()
        .map(|(q, row)| {
            let correct = truth.get(q).ok_or(Error::MissingTruth(q))?;
            let mut best: Option<(usize, f64)> = None;
            for (i, s) in row.iter().enumerate() {
                let v = s - bias.get(i).map_or(0.0, |b| f64::from(*b));
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            Ok(best.is_some_and(|(i, _)| correct.contains(&i)))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(mean_of(&hits))
}

/// Grid search over NNN `(alpha, k)` for held-out R@1.
///
/// A seeded held-out split the size of the test set is drawn from the
/// reference pool and removed from it while sweeping; its queries are labelled
/// by `ref_truth`. The selected cell is then scored on the test queries with
/// the full pool. Ties prefer smaller alpha, then smaller k.
pub fn sweep_nnn(
    data: EvalData<'_>,
    ref_truth: &GroundTruth,
    grid_alpha: &[f64],
    grid_k: &[usize],
    split_seed: u64,
) -> Result<SweepResult> {
    if grid_alpha.is_empty() || grid_k.is_empty() {
        return Err(Error::InvalidParameter("sweep grids must be non-empty".into()));
    }
    if grid_alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || grid_k.contains(&0) {
        return Err(Error::InvalidParameter("alpha must be >= 0 and k >= 1".into()));
    }
    let test_size = data.queries.rows();
    let pool = data.ref_queries.rows();
    if test_size == 0 || pool < 2 * test_size {
        return Err(Error::InsufficientData(format!(
            "reference pool of {pool} cannot hold out {test_size} queries and keep as many for reference"
        )));
    }
    let mut perm: Vec<usize> = (0..pool).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let mut heldout = perm[..test_size].to_vec();
    let mut remaining = perm[test_size..].to_vec();
    heldout.sort_unstable();
    remaining.sort_unstable();

    let val_queries = data.ref_queries.select_rows(&heldout)?;
    let val_truth = ref_truth.remap_queries(&heldout);
    let sweep_refs = data.ref_queries.select_rows(&remaining)?;
    let max_k = *grid_k.iter().max().expect("non-empty");
    if max_k > sweep_refs.rows() {
        log::warn!(
            "k up to {max_k} exceeds the {} sweep reference queries; larger k values are clamped",
            sweep_refs.rows()
        );
    }

    let val_scores = score_matrix(&val_queries, data.candidates)?;
    let sweep_index = VectorIndex::build_exact(Arc::new(sweep_refs.clone()));
    let neighbors = ReferenceNeighbors::new(data.candidates, &sweep_refs, max_k, &sweep_index, 1)?;

    let heldout_raw = recall_at_1_debiased(&val_scores, &[], &val_truth)?;
    let mut grid = Vec::with_capacity(grid_alpha.len() * grid_k.len());
    for &alpha in grid_alpha {
        for &k in grid_k {
            let bias = neighbors.bias(alpha, k)?;
            grid.push(SweepCell {
                alpha,
                k,
                recall_at_1: recall_at_1_debiased(&val_scores, bias.values(), &val_truth)?,
            });
        }
    }
    let best = grid
        .iter()
        .copied()
        .reduce(|a, b| {
            let better = b.recall_at_1 > a.recall_at_1
                || (b.recall_at_1 == a.recall_at_1
                    && (b.alpha < a.alpha || (b.alpha == a.alpha && b.k < a.k)));
            if better {
                b
            } else {
                a
            }
        })
        .expect("non-empty grid");

    let test_scores = score_matrix(data.queries, data.candidates)?;
    let full_index = VectorIndex::build_exact(Arc::new(data.ref_queries.clone()));
    let full = ReferenceNeighbors::new(data.candidates, data.ref_queries, best.k, &full_index, 1)?;
    let test = SweepTestEval {
        raw_recall_at_1: recall_at_1_debiased(&test_scores, &[], data.truth)?,
        best_recall_at_1: recall_at_1_debiased(
            &test_scores,
            full.bias(best.alpha, best.k)?.values(),
            data.truth,
        )?,
    };

    Ok(SweepResult {
        grid,
        best: BestCell {
            alpha: best.alpha,
            k: best.k,
        },
        split_seed,
        heldout_size: test_size,
        heldout_raw_recall_at_1: heldout_raw,
        test,
    })
}

/// Nested seeded subsets of `0..n`, one per fraction, each of size
/// `floor(fraction * n)`, sorted ascending.
pub fn nested_subsets(n: usize, fractions: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParameter(format!("fraction {f} is not in (0, 1]")));
            }
            let size = ((f * n as f64) + 1e-9).floor() as usize;
            if size == 0 {
                return Err(Error::EmptyReferenceSet);
            }
            let mut subset = perm[..size.min(n)].to_vec();
            subset.sort_unstable();
            Ok(subset)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub fraction: f64,
    pub n_refs: usize,
    pub r_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub method: NormalizationSpec,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

/// Re-runs `spec` with nested random subsets of the reference queries.
pub fn ablate_reference(
    data: EvalData<'_>,
    ref_candidates: Option<&EmbeddingMatrix>,
    fractions: &[f64],
    spec: &NormalizationSpec,
    seed: u64,
    ks: &[usize],
) -> Result<AblationReport> {
    let subsets = nested_subsets(data.ref_queries.rows(), fractions, seed)?;
    let index = VectorIndex::build_exact(Arc::new(data.candidates.clone()));
    let depth = ks.iter().copied().max().unwrap_or(1).max(1);
    let opts = ApplyOptions {
        depth,
        ..ApplyOptions::default()
    };
    let mut rows = Vec::with_capacity(subsets.len());
    for (&fraction, subset) in fractions.iter().zip(&subsets) {
        let refs = data.ref_queries.select_rows(subset)?;
        let table = apply(
            spec,
            data.queries,
            &index,
            References {
                queries: Some(&refs),
                candidates: ref_candidates,
            },
            &opts,
        )?;
        let r_at = ks
            .iter()
            .map(|&k| Ok((k, recall_at_k(&table, data.truth, k)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        rows.push(AblationRow {
            fraction,
            n_refs: subset.len(),
            r_at,
        });
    }
    Ok(AblationReport {
        method: *spec,
        seed,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributeBiasReport {
    pub n: usize,
    /// `(#A - #B) / n` per query.
    pub per_query: Vec<f64>,
    /// Mean bias per query group; empty without query groups.
    pub per_group: BTreeMap<String, f64>,
    pub mean_bias: f64,
}

fn top_n(table: &RankingTable, q: usize, n: usize) -> Result<&[crate::ranking::SearchHit]> {
    let hits = table.hits(q);
    if hits.len() < n {
        return Err(Error::InsufficientData(format!(
            "query {q} has {} hits, need {n}",
            hits.len()
        )));
    }
    Ok(&hits[..n])
}

/// Attribute skew of each query's top `n`: `(#A - #B) / n`, averaged per query
/// group and overall.
pub fn attribute_bias(
    table: &RankingTable,
    labels: &AttributeLabels,
    n: usize,
    query_groups: Option<&QueryGroups>,
) -> Result<AttributeBiasReport> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if table.is_empty() {
        return Err(Error::EmptyInput("ranking table has no queries"));
    }
    let mut per_query = Vec::with_capacity(table.len());
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for q in 0..table.len() {
        let mut a = 0i64;
        let mut b = 0i64;
        for h in top_n(table, q, n)? {
            match labels.get(h.candidate).ok_or(Error::UnlabeledCandidate(h.candidate))?.attribute {
                Attribute::A => a += 1,
                Attribute::B => b += 1,
            }
        }
        let bias = (a - b) as f64 / n as f64;
        per_query.push(bias);
        if let Some(qg) = query_groups {
            let g = qg.get(q).ok_or(Error::MissingQueryGroup(q))?;
            let e = groups.entry(g.to_string()).or_insert((0.0, 0));
            e.0 += bias;
            e.1 += 1;
        }
    }
    let mean_bias = per_query.iter().sum::<f64>() / per_query.len() as f64;
    Ok(AttributeBiasReport {
        n,
        per_query,
        per_group: groups
            .into_iter()
            .map(|(g, (s, c))| (g, s / c as f64))
            .collect(),
        mean_bias,
    })
}

/// Mean over queries of the share of top-`n` candidates whose group tag equals
/// the query's group.
pub fn attribute_precision(
    table: &RankingTable,
    labels: &AttributeLabels,
    query_groups: &QueryGroups,
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    if table.is_empty() {
        return Err(Error::EmptyInput("ranking table has no queries"));
    }
    let mut total = 0.0;
    for q in 0..table.len() {
        let group = query_groups.get(q).ok_or(Error::MissingQueryGroup(q))?;
        let mut matching = 0usize;
        for h in top_n(table, q, n)? {
            let label = labels.get(h.candidate).ok_or(Error::UnlabeledCandidate(h.candidate))?;
            let cand_group = label
                .group
                .as_deref()
                .ok_or(Error::UnlabeledCandidate(h.candidate))?;
            if cand_group == group {
                matching += 1;
            }
        }
        total += matching as f64 / n as f64;
    }
    Ok(total / table.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed_io::CandidateLabel;
    use crate::ranking::SearchHit;

    fn table(lists: &[&[usize]]) -> RankingTable {
        RankingTable::new(
            lists
                .iter()
                .map(|l| {
                    l.iter()
                        .enumerate()
                        .map(|(r, &c)| SearchHit::new(c, -(r as f64)))
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_grids() {
        let a = default_alpha_grid();
        assert_eq!(a.len(), 11);
        assert_eq!(a[0], 0.25);
        assert_eq!(a[1], 0.375);
        assert_eq!(a[10], 1.5);
        assert_eq!(default_k_grid(), vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512]);
    }

    #[test]
    fn recall_simple() {
        let t = table(&[&[3, 1, 2, 0], &[0, 1, 2, 3]]);
        let truth = GroundTruth::from_pairs([(0, 3), (1, 2)]);
        assert_eq!(recall_at_k(&t, &truth, 1).unwrap(), 0.5);
        assert_eq!(recall_at_k(&t, &truth, 5).unwrap(), 1.0);
        let missing = GroundTruth::from_pairs([(0, 3)]);
        assert!(matches!(recall_at_k(&t, &missing, 1), Err(Error::MissingTruth(1))));
    }

    #[test]
    fn bootstrap_degenerate() {
        assert_eq!(bootstrap_ci(&[true; 50], 100, 1, 0.95).unwrap(), (1.0, 1.0));
        assert_eq!(bootstrap_ci(&[false; 50], 100, 1, 0.95).unwrap(), (0.0, 0.0));
        assert!(matches!(bootstrap_ci(&[], 100, 1, 0.95), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let hits: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
        let a = bootstrap_ci(&hits, 300, 9, 0.9).unwrap();
        assert_eq!(a, bootstrap_ci(&hits, 300, 9, 0.9).unwrap());
        let p = mean_of(&hits);
        assert!(a.0 <= p && p <= a.1);
    }

    #[test]
    fn nested_subsets_are_nested() {
        let subs = nested_subsets(100, &[0.1, 0.2, 0.5, 1.0], 3).unwrap();
        assert_eq!(subs.iter().map(Vec::len).collect::<Vec<_>>(), vec![10, 20, 50, 100]);
        for w in subs.windows(2) {
            assert!(w[0].iter().all(|i| w[1].contains(i)));
        }
        assert!(matches!(nested_subsets(5, &[0.1], 3), Err(Error::EmptyReferenceSet)));
        assert!(nested_subsets(5, &[0.0], 3).is_err());
        assert!(nested_subsets(5, &[1.5], 3).is_err());
    }

    fn labels(spec: &[(usize, Attribute, &str)]) -> AttributeLabels {
        AttributeLabels::new(
            spec.iter()
                .map(|&(c, a, g)| {
                    (
                        c,
                        CandidateLabel {
                            attribute: a,
                            group: Some(g.to_string()),
                        },
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn attribute_bias_counts() {
        use Attribute::{A, B};
        let l = labels(&[
            (0, A, "x"),
            (1, A, "x"),
            (2, A, "y"),
            (3, A, "y"),
            (4, A, "x"),
            (5, B, "y"),
            (6, B, "x"),
            (7, B, "x"),
        ]);
        let t = table(&[&[0, 1, 2, 3, 4, 5], &[0, 1, 2, 5, 6, 7]]);
        let groups = QueryGroups::new(BTreeMap::from([(0, "x".into()), (1, "y".into())]));
        let r = attribute_bias(&t, &l, 6, Some(&groups)).unwrap();
        assert!((r.per_query[0] - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.per_query[1], 0.0);
        assert_eq!(r.per_group["x"], r.per_query[0]);
        let flipped = attribute_bias(&t, &l.flipped(), 6, None).unwrap();
        assert_eq!(flipped.mean_bias, -r.mean_bias);
        assert!(flipped.per_group.is_empty());

        // precision by hand: query 0 (x): {0,1,4} of 6 in x -> 3/6.
        // query 1 (y): {2,5} of 6 in y -> 2/6.
        let p = attribute_precision(&t, &l, &groups, 6).unwrap();
        assert!((p - (3.0 / 6.0 + 2.0 / 6.0) / 2.0).abs() < 1e-15);

        let unlabeled = table(&[&[9]]);
        assert!(matches!(
            attribute_bias(&unlabeled, &l, 1, None),
            Err(Error::UnlabeledCandidate(9))
        ));
    }

    #[test]
    fn attribute_precision_extremes() {
        use Attribute::{A, B};
        let l = labels(&[(0, A, "x"), (1, B, "x"), (2, A, "y")]);
        let groups = QueryGroups::new(BTreeMap::from([(0, "x".into())]));
        assert_eq!(attribute_precision(&table(&[&[0, 1]]), &l, &groups, 2).unwrap(), 1.0);
        let groups = QueryGroups::new(BTreeMap::from([(0, "z".into())]));
        assert_eq!(attribute_precision(&table(&[&[0, 1]]), &l, &groups, 2).unwrap(), 0.0);
    }
}
