//! Seeded synthetic retrieval benchmarks with planted ground truth.
//!
//! Queries are noisy copies of their target candidate pushed along a shared
//! "modality offset" direction, as text and image embeddings of contrastive
//! models sit in offset cones. In the hub benchmark one extra candidate points
//! along the mean reference query, so it scores well with almost every query
//! and steals their top-1 slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::embed_io::{EmbeddingMatrix, GroundTruth};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubConfig {
    /// Ordinary candidates; the hub is appended after them.
    pub n_regular: usize,
    pub dim: usize,
    pub n_ref: usize,
    pub n_test: usize,
    /// Norm of the isotropic noise added to a target before normalizing.
    pub noise: f64,
    /// Weight of the shared offset direction in every query.
    pub shift: f64,
    pub seed: u64,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig {
            n_regular: 99,
            dim: 32,
            n_ref: 500,
            n_test: 500,
            noise: 0.8,
            shift: 0.8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub candidates: EmbeddingMatrix,
    pub ref_queries: EmbeddingMatrix,
    /// Target candidate of each reference query.
    pub ref_truth: GroundTruth,
    /// Reference candidates drawn from the same distribution as `candidates`.
    pub ref_candidates: EmbeddingMatrix,
    pub queries: EmbeddingMatrix,
    pub truth: GroundTruth,
    /// Index of the planted hub, if any.
    pub hub: Option<usize>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<EmbeddingMatrix> {
    let data: Vec<f32> = rows.iter().flatten().map(|&x| x as f32).collect();
    EmbeddingMatrix::new(rows.len(), dim, data, true)
}

/// `n` queries, each aimed at a uniformly drawn target among the first
/// `n_targets` candidates.
fn queries_for(
    rng: &mut ChaCha8Rng,
    targets: &[Vec<f64>],
    n_targets: usize,
    n: usize,
    offset: &[f64],
    noise: f64,
    shift: f64,
) -> (Vec<Vec<f64>>, Vec<(usize, usize)>) {
    let dim = offset.len();
    let scale = noise / (dim as f64).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for q in 0..n {
        let t = rng.random_range(0..n_targets);
        let g = gaussian(rng, dim);
        let v = (0..dim)
            .map(|j| targets[t][j] + scale * g[j] + shift * offset[j])
            .collect();
        rows.push(unit(v));
        truth.push((q, t));
    }
    (rows, truth)
}

/// Isotropic unit candidates plus one hub along the mean reference query.
pub fn hub_benchmark(cfg: &HubConfig) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let mut cands: Vec<Vec<f64>> = (0..cfg.n_regular).map(|_| unit(gaussian(&mut rng, d))).collect();
    let offset = unit(gaussian(&mut rng, d));
    let (refs, ref_pairs) =
        queries_for(&mut rng, &cands, cfg.n_regular, cfg.n_ref, &offset, cfg.noise, cfg.shift);
    let (tests, test_pairs) =
        queries_for(&mut rng, &cands, cfg.n_regular, cfg.n_test, &offset, cfg.noise, cfg.shift);
    let ref_cands: Vec<Vec<f64>> = (0..cfg.n_regular).map(|_| unit(gaussian(&mut rng, d))).collect();

    let mut mean = vec![0.0; d];
    for r in &refs {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    cands.push(unit(mean));

    Ok(Benchmark {
        candidates: to_matrix(&cands, d)?,
        ref_queries: to_matrix(&refs, d)?,
        ref_truth: GroundTruth::from_pairs(ref_pairs),
        ref_candidates: to_matrix(&ref_cands, d)?,
        queries: to_matrix(&tests, d)?,
        truth: GroundTruth::from_pairs(test_pairs),
        hub: Some(cfg.n_regular),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteredConfig {
    pub n_candidates: usize,
    pub n_ref: usize,
    pub n_test: usize,
    pub dim: usize,
    /// Candidates are drawn around this many random unit centers.
    pub n_clusters: usize,
    /// Norm of candidate spread around its center.
    pub spread: f64,
    pub noise: f64,
    pub shift: f64,
    pub seed: u64,
}

impl Default for ClusteredConfig {
    fn default() -> Self {
        ClusteredConfig {
            n_candidates: 50_000,
            n_ref: 100_000,
            n_test: 2_000,
            dim: 64,
            n_clusters: 256,
            spread: 0.6,
            noise: 1.0,
            shift: 0.8,
            seed: 42,
        }
    }
}

/// Candidates clustered around random centers; queries aimed at candidates.
/// No planted hub.
pub fn clustered_benchmark(cfg: &ClusteredConfig) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let scale = cfg.spread / (d as f64).sqrt();
    let centers: Vec<Vec<f64>> = (0..cfg.n_clusters.max(1)).map(|_| unit(gaussian(&mut rng, d))).collect();
    let draw_candidates = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let c = &centers[rng.random_range(0..centers.len())];
                let g = gaussian(rng, d);
                unit((0..d).map(|j| c[j] + scale * g[j]).collect())
            })
            .collect()
    };
    let cands = draw_candidates(cfg.n_candidates, &mut rng);
    let ref_cands = draw_candidates(cfg.n_candidates.min(10_000), &mut rng);
    let offset = unit(gaussian(&mut rng, d));
    let (refs, ref_pairs) =
        queries_for(&mut rng, &cands, cfg.n_candidates, cfg.n_ref, &offset, cfg.noise, cfg.shift);
    let (tests, test_pairs) =
        queries_for(&mut rng, &cands, cfg.n_candidates, cfg.n_test, &offset, cfg.noise, cfg.shift);
    Ok(Benchmark {
        candidates: to_matrix(&cands, d)?,
        ref_queries: to_matrix(&refs, d)?,
        ref_truth: GroundTruth::from_pairs(ref_pairs),
        ref_candidates: to_matrix(&ref_cands, d)?,
        queries: to_matrix(&tests, d)?,
        truth: GroundTruth::from_pairs(test_pairs),
        hub: None,
    })
}
