//! Exact and inverted-file (IVF) maximum-inner-product search.
//!
//! Every score is an `f64` sum of `f32 * f32` products taken in ascending
//! dimension order, whichever code path produces it, so exact search, IVF with
//! all lists probed, and brute-force oracles agree bit for bit.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embed_io::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::ranking::{top_k_of, RankingTable, SearchHit, TopK};

pub const DEFAULT_NPROBE: usize = 8;
pub const DEFAULT_KMEANS_ITERS: usize = 20;
pub const DEFAULT_SEED: u64 = 42;
/// Training points kept per centroid before k-means subsamples its input.
pub const DEFAULT_TRAIN_POINTS_PER_CENTROID: usize = 64;

/// Inner product with f64 accumulation in dimension order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc
}

/// `N` independent [`dot`]s sharing one query. Each pair is still summed in
/// dimension order, so results are bit-identical to `dot`; the parallel chains
/// just hide add latency.
#[inline(always)]
fn dot_block<const N: usize>(q: &[f32], block: &[f32]) -> [f64; N] {
    let n = q.len();
    let block = &block[..N * n];
    let mut acc = [0.0f64; N];
    for j in 0..n {
        let x = f64::from(q[j]);
        for (r, a) in acc.iter_mut().enumerate() {
            *a += x * f64::from(block[r * n + j]);
        }
    }
    acc
}

/// Calls `f(row, score)` for every row of `base`, in row order.
#[inline]
pub fn for_each_score(query: &[f32], base: &EmbeddingMatrix, mut f: impl FnMut(usize, f64)) {
    const BLOCK: usize = 8;
    let dim = base.dim();
    let data = base.data();
    let rows = base.rows();
    let mut i = 0;
    while i + BLOCK <= rows {
        let s = dot_block::<BLOCK>(query, &data[i * dim..(i + BLOCK) * dim]);
        for (o, v) in s.into_iter().enumerate() {
            f(i + o, v);
        }
        i += BLOCK;
    }
    while i < rows {
        f(i, dot(query, base.row(i)));
        i += 1;
    }
}

const LANES: usize = 8;

/// Rows regrouped in blocks of `LANES`, dimension-major inside a block, so one
/// query coordinate meets eight rows in adjacent memory and the products
/// vectorize across rows. Per pair the sum order is unchanged.
#[derive(Debug, Clone)]
struct PackedRows {
    dim: usize,
    /// Original row id of each slot.
    ids: Vec<usize>,
    data: Vec<f32>,
}

impl PackedRows {
    fn new(base: &EmbeddingMatrix, ids: Vec<usize>) -> Self {
        let dim = base.dim();
        let blocks = ids.len().div_ceil(LANES);
        let mut data = vec![0.0f32; blocks * dim * LANES];
        for (slot, &row) in ids.iter().enumerate() {
            let block = &mut data[(slot / LANES) * dim * LANES..];
            for (j, &x) in base.row(row).iter().enumerate() {
                block[j * LANES + slot % LANES] = x;
            }
        }
        PackedRows { dim, ids, data }
    }

    fn all(base: &EmbeddingMatrix) -> Self {
        Self::new(base, (0..base.rows()).collect())
    }

    #[inline]
    fn scan(&self, query: &[f32], f: impl FnMut(usize, f64)) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: the CPU supports AVX, checked just above.
            unsafe { self.scan_avx(query, f) };
            return;
        }
        self.scan_generic(query, f);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx")]
    unsafe fn scan_avx(&self, query: &[f32], f: impl FnMut(usize, f64)) {
        self.scan_generic(query, f);
    }

    #[inline(always)]
    fn scan_generic(&self, query: &[f32], mut f: impl FnMut(usize, f64)) {
        let stride = self.dim * LANES;
        if stride == 0 {
            return;
        }
        for (b, block) in self.data.chunks_exact(stride).enumerate() {
            let mut acc = [0.0f64; LANES];
            for (&x, col) in query.iter().zip(block.chunks_exact(LANES)) {
                let x = f64::from(x);
                for r in 0..LANES {
                    acc[r] += x * f64::from(col[r]);
                }
            }
            let ids = &self.ids[b * LANES..self.ids.len().min((b + 1) * LANES)];
            for (&id, &score) in ids.iter().zip(&acc) {
                f(id, score);
            }
        }
    }
}

/// Scores of `query` against every row of `base`.
pub fn score_all(query: &[f32], base: &EmbeddingMatrix) -> Vec<f64> {
    let mut out = vec![0.0; base.rows()];
    for_each_score(query, base, |i, s| out[i] = s);
    out
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}

/// IVF construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IvfParams {
    /// `None` picks `ceil(sqrt(rows))`.
    pub ncentroids: Option<usize>,
    pub kmeans_iters: usize,
    pub seed: u64,
    /// k-means trains on at most this many points per centroid (seeded sample).
    pub train_points_per_centroid: usize,
}

impl Default for IvfParams {
    fn default() -> Self {
        IvfParams {
            ncentroids: None,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            seed: DEFAULT_SEED,
            train_points_per_centroid: DEFAULT_TRAIN_POINTS_PER_CENTROID,
        }
    }
}

pub fn default_ncentroids(rows: usize) -> usize {
    ((rows as f64).sqrt().ceil() as usize).max(1)
}

/// Which index to build over a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexConfig {
    #[default]
    Exact,
    Ivf(IvfParams),
}

impl IndexConfig {
    pub fn build(&self, base: Arc<EmbeddingMatrix>) -> Result<VectorIndex> {
        match self {
            IndexConfig::Exact => Ok(VectorIndex::build_exact(base)),
            IndexConfig::Ivf(p) => VectorIndex::build_ivf(base, p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IvfLayout {
    pub centroids: EmbeddingMatrix,
    /// Row ids per centroid, ascending.
    pub lists: Vec<Vec<usize>>,
    pub params: IvfParams,
}

#[derive(Debug, Clone)]
pub enum IndexKind {
    Exact,
    Ivf(IvfLayout),
}

/// Immutable top-k inner-product index over a shared matrix.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    base: Arc<EmbeddingMatrix>,
    kind: IndexKind,
    /// The whole base for exact search, one entry per list for IVF.
    packed: Vec<PackedRows>,
}

impl VectorIndex {
    pub fn build_exact(base: Arc<EmbeddingMatrix>) -> Self {
        VectorIndex {
            packed: vec![PackedRows::all(&base)],
            base,
            kind: IndexKind::Exact,
        }
    }

    pub fn build_ivf(base: Arc<EmbeddingMatrix>, params: &IvfParams) -> Result<Self> {
        let rows = base.rows();
        let ncentroids = params.ncentroids.unwrap_or_else(|| default_ncentroids(rows));
        if ncentroids == 0 {
            return Err(Error::InvalidParameter("ncentroids must be at least 1".into()));
        }
        if ncentroids > rows {
            return Err(Error::KTooLarge {
                k: ncentroids,
                rows,
            });
        }
        let cap = ncentroids.saturating_mul(params.train_points_per_centroid.max(1));
        let (centroids, assignments) = if rows > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut picked = sample(&mut rng, rows, cap).into_vec();
            picked.sort_unstable();
            let train = base.select_rows(&picked)?;
            let km = kmeans(&train, ncentroids, params.kmeans_iters, params.seed)?;
            let assignments = assign_all(&base, &km.centroids);
            (km.centroids, assignments)
        } else {
            let km = kmeans(&base, ncentroids, params.kmeans_iters, params.seed)?;
            (km.centroids, km.assignments)
        };
        let mut lists = vec![Vec::new(); ncentroids];
        for (row, &c) in assignments.iter().enumerate() {
            lists[c].push(row);
        }
        let packed = lists.iter().map(|l| PackedRows::new(&base, l.clone())).collect();
        Ok(VectorIndex {
            packed,
            base,
            kind: IndexKind::Ivf(IvfLayout {
                centroids,
                lists,
                params: IvfParams {
                    ncentroids: Some(ncentroids),
                    ..*params
                },
            }),
        })
    }

    /// Builds an index of the same kind and parameters over a different matrix.
    pub fn rebuild_over(&self, base: Arc<EmbeddingMatrix>) -> Result<Self> {
        match &self.kind {
            IndexKind::Exact => Ok(Self::build_exact(base)),
            IndexKind::Ivf(layout) => Self::build_ivf(
                base,
                &IvfParams {
                    ncentroids: None,
                    ..layout.params
                },
            ),
        }
    }

    pub fn base(&self) -> &EmbeddingMatrix {
        &self.base
    }

    pub fn base_arc(&self) -> &Arc<EmbeddingMatrix> {
        &self.base
    }

    pub fn kind(&self) -> &IndexKind {
        &self.kind
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kind, IndexKind::Exact)
    }

    /// Top-`k` rows by inner product with `query`. `nprobe` only matters for IVF.
    pub fn search(&self, query: &[f32], k: usize, nprobe: usize) -> Result<Vec<SearchHit>> {
        check_dim(self.base.dim(), query.len())?;
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let mut top = TopK::new(k.min(self.base.rows()));
        match &self.kind {
            IndexKind::Exact => self.packed[0].scan(query, |i, s| top.push(i, s)),
            IndexKind::Ivf(layout) => {
                if nprobe == 0 {
                    return Err(Error::InvalidParameter("nprobe must be at least 1".into()));
                }
                // Lists were filled by L2 distance, so probe by it too:
                // argmin |q - c|^2 = argmax q.c - |c|^2 / 2.
                let probes = top_k_of(
                    (0..layout.centroids.rows()).map(|c| {
                        let cen = layout.centroids.row(c);
                        (c, dot(query, cen) - 0.5 * dot(cen, cen))
                    }),
                    nprobe,
                );
                for p in probes {
                    self.packed[p.candidate].scan(query, |i, s| top.push(i, s));
                }
            }
        }
        Ok(top.into_sorted())
    }

    /// Row `i` of the result is `search(queries.row(i), k, nprobe)`.
    pub fn batch_search(
        &self,
        queries: &EmbeddingMatrix,
        k: usize,
        nprobe: usize,
    ) -> Result<RankingTable> {
        if queries.rows() > 0 {
            check_dim(self.base.dim(), queries.dim())?;
        }
        let rows = (0..queries.rows())
            .into_par_iter()
            .map(|i| self.search(queries.row(i), k, nprobe))
            .collect::<Result<Vec<_>>>()?;
        Ok(RankingTable::from_sorted(rows))
    }
}

/// k-means output: centroids plus, per input point, its centroid.
#[derive(Debug, Clone)]
pub struct KMeans {
    pub centroids: EmbeddingMatrix,
    pub assignments: Vec<usize>,
}

impl KMeans {
    /// Within-cluster sum of squared distances.
    pub fn sse(&self, points: &EmbeddingMatrix) -> f64 {
        self.assignments
            .iter()
            .enumerate()
            .map(|(i, &c)| sq_dist(points.row(i), self.centroids.row(c)))
            .sum()
    }
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

fn squared_norms(m: &EmbeddingMatrix) -> Vec<f64> {
    m.iter_rows().map(|r| dot(r, r)).collect()
}

/// Centroids packed for scanning, with `|c|^2 / 2` per centroid.
struct CentroidTable {
    packed: PackedRows,
    half_norms: Vec<f64>,
}

impl CentroidTable {
    fn new(centroids: &EmbeddingMatrix) -> Self {
        CentroidTable {
            packed: PackedRows::all(centroids),
            half_norms: squared_norms(centroids).into_iter().map(|n| 0.5 * n).collect(),
        }
    }

    /// Nearest centroid by squared L2 distance, lowest index on ties:
    /// `argmin |x - c|^2 = argmax x.c - |c|^2 / 2`.
    fn nearest(&self, point: &[f32]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        self.packed.scan(point, |c, s| {
            let v = s - self.half_norms[c];
            if v > best.1 {
                best = (c, v);
            }
        });
        best.0
    }

    fn assign(&self, points: &EmbeddingMatrix) -> Vec<usize> {
        (0..points.rows())
            .into_par_iter()
            .map(|i| self.nearest(points.row(i)))
            .collect()
    }
}

fn to_matrix(centroids: &[Vec<f64>], dim: usize) -> Result<EmbeddingMatrix> {
    let data: Vec<f32> = centroids.iter().flatten().map(|&x| x as f32).collect();
    EmbeddingMatrix::new(centroids.len(), dim, data, false)
}

fn assign_all(points: &EmbeddingMatrix, centroids: &EmbeddingMatrix) -> Vec<usize> {
    CentroidTable::new(centroids).assign(points)
}

/// Lloyd's algorithm with greedy k-means++ seeding.
///
/// Deterministic for fixed inputs. A cluster that empties during an iteration
/// is re-seeded with the point farthest from its assigned centroid.
pub fn kmeans(points: &EmbeddingMatrix, k: usize, iters: usize, seed: u64) -> Result<KMeans> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::KTooLarge { k, rows: n });
    }
    let dim = points.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = seed_plus_plus(points, k, &mut rng)
        .into_iter()
        .map(|i| points.row(i).iter().map(|&x| f64::from(x)).collect())
        .collect();

    let assign = |centroids: &[Vec<f64>]| -> Result<Vec<usize>> {
        Ok(CentroidTable::new(&to_matrix(centroids, dim)?).assign(points))
    };

    let mut assignment = assign(&centroids)?;
    for _ in 0..iters {
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums[c].iter_mut().zip(points.row(i)) {
                *s += f64::from(x);
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                centroids[c] = sums[c].iter().map(|s| s / inv).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = (0usize, -1.0f64);
                for (i, &a) in assignment.iter().enumerate() {
                    let row = points.row(i);
                    let d: f64 = row
                        .iter()
                        .zip(&centroids[a])
                        .map(|(&x, m)| (f64::from(x) - m).powi(2))
                        .sum();
                    if d > far.1 {
                        far = (i, d);
                    }
                }
                centroids[c] = points.row(far.0).iter().map(|&x| f64::from(x)).collect();
                assignment[far.0] = c;
                counts[c] = 1;
            }
        }
        let next = assign(&centroids)?;
        let settled = next == assignment;
        assignment = next;
        if settled {
            break;
        }
    }

    Ok(KMeans {
        centroids: to_matrix(&centroids, dim)?,
        assignments: assignment,
    })
}

/// Greedy k-means++: each step draws `2 + ln k` D²-weighted candidates and keeps
/// the one that most reduces the potential.
fn seed_plus_plus(points: &EmbeddingMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.rows();
    let trials = 2 + (k as f64).ln() as usize;
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut taken = vec![false; n];
    taken[first] = true;
    let packed = PackedRows::all(points);
    let norms = squared_norms(points);
    // Squared distances to point `c` via |x|^2 + |c|^2 - 2 x.c; differences at
    // rounding level are taken as duplicates.
    let dist_to = |c: usize| -> Vec<f64> {
        let mut out = vec![0.0; n];
        packed.scan(points.row(c), |i, s| {
            let scale = norms[i] + norms[c];
            let d = scale - 2.0 * s;
            out[i] = if d <= 1e-9 * scale { 0.0 } else { d };
        });
        out
    };
    let mut d2 = dist_to(first);

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            // Every remaining point duplicates a chosen one.
            (0..n).find(|&i| !taken[i]).expect("k <= n leaves an untaken point")
        } else {
            let mut best: Option<(usize, f64, Vec<f64>)> = None;
            for _ in 0..trials {
                let cand = weighted_draw(&d2, total, rng);
                let updated: Vec<f64> = dist_to(cand).iter().zip(&d2).map(|(a, b)| a.min(*b)).collect();
                let potential: f64 = updated.iter().sum();
                if best.as_ref().is_none_or(|b| potential < b.1) {
                    best = Some((cand, potential, updated));
                }
            }
            let (cand, _, updated) = best.expect("at least two trials");
            d2 = updated;
            cand
        };
        if total <= 0.0 {
            d2[pick] = 0.0;
        }
        taken[pick] = true;
        chosen.push(pick);
    }
    chosen
}

fn weighted_draw(weights: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            cum += w;
            last_positive = i;
            if cum > target {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f32]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows, rows[0].len(), false).unwrap()
    }

    fn four_points() -> EmbeddingMatrix {
        m(&[&[0.0, 0.0], &[0.0, 1.0], &[10.0, 0.0], &[10.0, 1.0]])
    }

    #[test]
    fn empty_base_returns_no_hits() {
        let idx = VectorIndex::build_exact(Arc::new(EmbeddingMatrix::empty(3).unwrap()));
        assert!(idx.search(&[1.0, 0.0, 0.0], 5, 1).unwrap().is_empty());
    }

    #[test]
    fn identity_top1() {
        let idx = VectorIndex::build_exact(Arc::new(m(&[&[1.0, 0.0], &[0.0, 1.0]])));
        let hits = idx.search(&[1.0, 0.0], 1, 1).unwrap();
        assert_eq!(hits, vec![SearchHit::new(0, 1.0)]);
    }

    #[test]
    fn hand_computed_scores() {
        let idx = VectorIndex::build_exact(Arc::new(m(&[&[2.0, 0.0], &[0.0, 2.0]])));
        let hits = idx.search(&[1.0, 0.4], 2, 1).unwrap();
        assert_eq!(hits[0], SearchHit::new(0, 2.0));
        assert_eq!(hits[1].candidate, 1);
        // 0.4f32 widened to f64 and doubled.
        assert_eq!(hits[1].score, 2.0 * f64::from(0.4f32));
        assert!((hits[1].score - 0.8).abs() < 1e-7);
    }

    #[test]
    fn k_larger_than_rows_is_clamped() {
        let idx = VectorIndex::build_exact(Arc::new(four_points()));
        assert_eq!(idx.search(&[1.0, 1.0], 10, 1).unwrap().len(), 4);
    }

    #[test]
    fn dim_mismatch() {
        let idx = VectorIndex::build_exact(Arc::new(four_points()));
        assert!(matches!(
            idx.search(&[1.0], 1, 1),
            Err(Error::DimMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn kmeans_four_points_finds_the_two_pairs() {
        let pts = four_points();
        for seed in 0..20 {
            let km = kmeans(&pts, 2, 10, seed).unwrap();
            let mut cs: Vec<(f32, f32)> = km
                .centroids
                .iter_rows()
                .map(|r| (r[0], r[1]))
                .collect();
            cs.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert_eq!(cs, vec![(0.0, 0.5), (10.0, 0.5)], "seed {seed}");
            assert_eq!(km.assignments[0], km.assignments[1]);
            assert_eq!(km.assignments[2], km.assignments[3]);
            assert_ne!(km.assignments[0], km.assignments[2]);
        }
    }

    #[test]
    fn kmeans_four_points_matches_exhaustive_partition_oracle() {
        // Enumerate every 2-partition and take the SSE minimizer.
        let pts = four_points();
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1u32..15 {
            let mut sse = 0.0;
            for side in [true, false] {
                let members: Vec<usize> =
                    (0..4).filter(|&i| ((mask >> i) & 1 == 1) == side).collect();
                let mean: Vec<f64> = (0..2)
                    .map(|d| members.iter().map(|&i| f64::from(pts.row(i)[d])).sum::<f64>() / members.len() as f64)
                    .collect();
                for &i in &members {
                    sse += (0..2).map(|d| (f64::from(pts.row(i)[d]) - mean[d]).powi(2)).sum::<f64>();
                }
            }
            if sse < best.0 {
                best = (sse, mask);
            }
        }
        assert!(best.1 == 0b0011 || best.1 == 0b1100);
        let km = kmeans(&pts, 2, 10, 7).unwrap();
        assert!((km.sse(&pts) - best.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_k_equals_rows_has_zero_sse() {
        let pts = four_points();
        let km = kmeans(&pts, 4, 5, 3).unwrap();
        assert_eq!(km.sse(&pts), 0.0);
        let mut a = km.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_zero_iters_keeps_seeds() {
        let pts = four_points();
        let km = kmeans(&pts, 2, 0, 11).unwrap();
        for c in km.centroids.iter_rows() {
            assert!(pts.iter_rows().any(|p| p == c));
        }
    }

    #[test]
    fn kmeans_handles_duplicates_and_errors() {
        let pts = m(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let km = kmeans(&pts, 3, 5, 0).unwrap();
        assert_eq!(km.sse(&pts), 0.0);
        assert!(matches!(kmeans(&pts, 4, 5, 0), Err(Error::KTooLarge { k: 4, rows: 3 })));
    }

    #[test]
    fn ivf_list_shapes() {
        let base = Arc::new(four_points());
        let params = |n| IvfParams {
            ncentroids: Some(n),
            ..IvfParams::default()
        };
        let one = VectorIndex::build_ivf(base.clone(), &params(1)).unwrap();
        let two = VectorIndex::build_ivf(base.clone(), &params(2)).unwrap();
        let four = VectorIndex::build_ivf(base.clone(), &params(4)).unwrap();
        let lists = |idx: &VectorIndex| match idx.kind() {
            IndexKind::Ivf(l) => l.lists.clone(),
            IndexKind::Exact => unreachable!(),
        };
        assert_eq!(lists(&one), vec![vec![0, 1, 2, 3]]);
        let mut two_lists = lists(&two);
        two_lists.sort();
        assert_eq!(two_lists, vec![vec![0, 1], vec![2, 3]]);
        assert!(lists(&four).iter().all(|l| l.len() == 1));
        assert!(matches!(
            VectorIndex::build_ivf(base, &params(5)),
            Err(Error::KTooLarge { .. })
        ));
    }
}
