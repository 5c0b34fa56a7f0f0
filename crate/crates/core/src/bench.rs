//! Exhaustive versus index-backed NNN bias computation.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::embed_io::{EmbeddingMatrix, GroundTruth};
use crate::error::Result;
use crate::evaluation::recall_at_k;
use crate::normalization::{apply, compute_bias, ApplyOptions, BiasVector, NormalizationSpec, References};
use crate::vector_index::{IvfParams, VectorIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRecall {
    pub exhaustive: f64,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    /// Wall time of the exhaustive scan.
    pub exhaustive_seconds: f64,
    /// Wall time of IVF construction plus the index-backed bias.
    pub index_seconds: f64,
    pub index_build_seconds: f64,
    pub speedup: f64,
    pub max_abs_delta: f64,
    pub ncentroids: usize,
    pub nprobe: usize,
    /// R@1 of exhaustive debiased retrieval under each bias, when queries and
    /// ground truth are supplied.
    pub recall_at_1: Option<BenchRecall>,
}

impl BenchReport {
    /// Field names that hold wall-clock measurements.
    pub const TIMING_FIELDS: [&'static str; 4] = [
        "exhaustive_seconds",
        "index_seconds",
        "index_build_seconds",
        "speedup",
    ];
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub report: BenchReport,
    pub exhaustive_bias: BiasVector,
    pub index_bias: BiasVector,
}

fn recall_with_bias(
    queries: &EmbeddingMatrix,
    candidates: &Arc<EmbeddingMatrix>,
    truth: &GroundTruth,
    bias: &BiasVector,
) -> Result<f64> {
    let index = VectorIndex::build_exact(candidates.clone());
    let table = apply(
        &NormalizationSpec::Nnn {
            alpha: bias.alpha(),
            k: bias.k(),
        },
        queries,
        &index,
        References::default(),
        &ApplyOptions {
            depth: 1,
            bias: Some(bias.clone()),
            ..ApplyOptions::default()
        },
    )?;
    recall_at_k(&table, truth, 1)
}

/// Times both bias routes over the same inputs.
#[allow(clippy::too_many_arguments)]
pub fn bench_bias(
    candidates: Arc<EmbeddingMatrix>,
    ref_queries: Arc<EmbeddingMatrix>,
    alpha: f64,
    k: usize,
    ivf: &IvfParams,
    nprobe: usize,
    eval: Option<(&EmbeddingMatrix, &GroundTruth)>,
) -> Result<BenchOutcome> {
    let t0 = Instant::now();
    let exact = VectorIndex::build_exact(ref_queries.clone());
    let exhaustive_bias = compute_bias(&candidates, &ref_queries, alpha, k, &exact, 1)?;
    let exhaustive_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let ivf_index = VectorIndex::build_ivf(ref_queries.clone(), ivf)?;
    let index_build_seconds = t1.elapsed().as_secs_f64();
    let index_bias = compute_bias(&candidates, &ref_queries, alpha, k, &ivf_index, nprobe)?;
    let index_seconds = t1.elapsed().as_secs_f64();

    let max_abs_delta = exhaustive_bias
        .values()
        .iter()
        .zip(index_bias.values())
        .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs())
        .fold(0.0, f64::max);
    let ncentroids = match ivf_index.kind() {
        crate::vector_index::IndexKind::Ivf(l) => l.lists.len(),
        crate::vector_index::IndexKind::Exact => 0,
    };
    let recall_at_1 = match eval {
        Some((queries, truth)) => Some(BenchRecall {
            exhaustive: recall_with_bias(queries, &candidates, truth, &exhaustive_bias)?,
            index: recall_with_bias(queries, &candidates, truth, &index_bias)?,
        }),
        None => None,
    };
    Ok(BenchOutcome {
        report: BenchReport {
            exhaustive_seconds,
            index_seconds,
            index_build_seconds,
            speedup: exhaustive_seconds / index_seconds.max(f64::MIN_POSITIVE),
            max_abs_delta,
            ncentroids,
            nprobe,
            recall_at_1,
        },
        exhaustive_bias,
        index_bias,
    })
}
