//! Score normalization against a reference bank.
//!
//! The main method is nearest-neighbor normalization (NNN): every retrieval
//! candidate `r` gets a bias
//!
//! ```text
//! b(r) = alpha * mean of s(q, r) over the k reference queries q scoring highest with r
//! ```
//!
//! and queries are ranked by `s(q, r) - b(r)`. Because the bias depends only on
//! the candidate it can be computed once and cached, and appending `b(r)` to each
//! candidate and `-1` to each query turns the debiased score into a plain inner
//! product that any vector index can serve.
//!
//! The baselines are distribution normalization (mean subtraction), QBNorm, and
//! the DBNorm scorers DualIS / DualDIS. The softmax-style scorers are evaluated
//! in the log domain; ranking tables produced by [`apply`] for those methods
//! carry `ln ŝ` as the score.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_io::{fingerprint, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::ranking::{top_k_of, RankingTable, SearchHit};
use crate::vector_index::{for_each_score, score_all, IndexConfig, VectorIndex, DEFAULT_NPROBE};

/// Per-candidate NNN bias together with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasVector {
    values: Vec<f32>,
    alpha: f64,
    k: usize,
    ref_fingerprint: u64,
}

impl BiasVector {
    pub fn new(values: Vec<f32>, alpha: f64, k: usize, ref_fingerprint: u64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                offset: (crate::embed_io::BIAS_HEADER_LEN + 4 * i) as u64,
            });
        }
        Ok(BiasVector {
            values,
            alpha,
            k,
            ref_fingerprint,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Effective neighbor count (after clamping to the reference-set size).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ref_fingerprint(&self) -> u64 {
        self.ref_fingerprint
    }

    pub fn matches_reference(&self, ref_queries: &EmbeddingMatrix) -> bool {
        fingerprint(ref_queries) == self.ref_fingerprint
    }

    /// Same bias shifted by a constant (ranking-invariant).
    pub fn shifted(&self, c: f32) -> Result<Self> {
        Self::new(
            self.values.iter().map(|v| v + c).collect(),
            self.alpha,
            self.k,
            self.ref_fingerprint,
        )
    }
}

/// A normalization method and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum NormalizationSpec {
    #[serde(rename = "none")]
    Raw,
    #[serde(rename = "nnn")]
    Nnn { alpha: f64, k: usize },
    #[serde(rename = "dn")]
    Dn,
    #[serde(rename = "qbnorm")]
    QbNorm { beta2: f64 },
    #[serde(rename = "dualis")]
    DualIs { beta1: f64, beta2: f64 },
    #[serde(rename = "dualdis")]
    DualDis {
        beta1: f64,
        beta2: f64,
        activation_threshold: usize,
    },
}

pub const METHOD_NAMES: [&str; 6] = ["none", "nnn", "dn", "qbnorm", "dualis", "dualdis"];

/// Loose method parameters, as they arrive from a command line or a binding.
#[derive(Debug, Clone, Copy, Default)]
pub struct MethodParams {
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub activation_threshold: Option<usize>,
}

impl NormalizationSpec {
    pub fn name(&self) -> &'static str {
        match self {
            NormalizationSpec::Raw => "none",
            NormalizationSpec::Nnn { .. } => "nnn",
            NormalizationSpec::Dn => "dn",
            NormalizationSpec::QbNorm { .. } => "qbnorm",
            NormalizationSpec::DualIs { .. } => "dualis",
            NormalizationSpec::DualDis { .. } => "dualdis",
        }
    }

    /// Builds a spec from a method name, requiring exactly the parameters the
    /// method uses. `activation_threshold` defaults to 1 for `dualdis`.
    pub fn from_params(method: &str, p: MethodParams) -> Result<Self> {
        let missing = |what: &str| Error::InvalidParameter(format!("method {method} requires --{what}"));
        let mut used = [false; 5];
        let spec = match method {
            "none" => NormalizationSpec::Raw,
            "dn" => NormalizationSpec::Dn,
            "nnn" => {
                used[0] = true;
                used[1] = true;
                NormalizationSpec::Nnn {
                    alpha: p.alpha.ok_or_else(|| missing("alpha"))?,
                    k: p.k.ok_or_else(|| missing("k"))?,
                }
            }
            "qbnorm" => {
                used[3] = true;
                NormalizationSpec::QbNorm {
                    beta2: p.beta2.ok_or_else(|| missing("beta2"))?,
                }
            }
            "dualis" => {
                used[2] = true;
                used[3] = true;
                NormalizationSpec::DualIs {
                    beta1: p.beta1.ok_or_else(|| missing("beta1"))?,
                    beta2: p.beta2.ok_or_else(|| missing("beta2"))?,
                }
            }
            "dualdis" => {
                used[2] = true;
                used[3] = true;
                used[4] = true;
                NormalizationSpec::DualDis {
                    beta1: p.beta1.ok_or_else(|| missing("beta1"))?,
                    beta2: p.beta2.ok_or_else(|| missing("beta2"))?,
                    activation_threshold: p.activation_threshold.unwrap_or(1),
                }
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown method {other:?}; expected one of {}",
                    METHOD_NAMES.join("|")
                )))
            }
        };
        let given = [
            ("alpha", p.alpha.is_some()),
            ("k", p.k.is_some()),
            ("beta1", p.beta1.is_some()),
            ("beta2", p.beta2.is_some()),
            ("activation-threshold", p.activation_threshold.is_some()),
        ];
        for ((flag, present), used) in given.iter().zip(used) {
            if *present && !used {
                return Err(Error::InvalidParameter(format!(
                    "--{flag} does not apply to method {method}"
                )));
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| b.is_finite() && b >= 0.0;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match *self {
            NormalizationSpec::Nnn { alpha, k } => {
                if !(alpha.is_finite() && alpha >= 0.0) {
                    return bad("alpha must be finite and >= 0");
                }
                if k == 0 {
                    return bad("k must be at least 1");
                }
            }
            NormalizationSpec::QbNorm { beta2 } if !beta_ok(beta2) => return bad("beta2 must be >= 0"),
            NormalizationSpec::DualIs { beta1, beta2 } if !(beta_ok(beta1) && beta_ok(beta2)) => {
                return bad("beta1 and beta2 must be >= 0")
            }
            NormalizationSpec::DualDis {
                beta1,
                beta2,
                activation_threshold,
            } => {
                if !(beta_ok(beta1) && beta_ok(beta2)) {
                    return bad("beta1 and beta2 must be >= 0");
                }
                if activation_threshold == 0 {
                    return bad("activation threshold must be at least 1");
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimMismatch { expected, found });
    }
    Ok(())
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Clamps `k` to the reference-set size, logging when it had to.
pub fn effective_k(k: usize, n_refs: usize) -> usize {
    if k > n_refs {
        log::warn!("k = {k} exceeds the {n_refs} reference queries; clamped to {n_refs}");
    }
    k.min(n_refs)
}

/// NNN bias for every candidate, using `index_over_ref` to find each
/// candidate's top-k reference queries. An exact index gives the exact bias.
pub fn compute_bias(
    candidates: &EmbeddingMatrix,
    ref_queries: &EmbeddingMatrix,
    alpha: f64,
    k: usize,
    index_over_ref: &VectorIndex,
    nprobe: usize,
) -> Result<BiasVector> {
    if ref_queries.rows() == 0 {
        return Err(Error::EmptyReferenceSet);
    }
    check_dim(ref_queries.dim(), candidates.dim())?;
    let base = index_over_ref.base();
    if base.rows() != ref_queries.rows() || base.dim() != ref_queries.dim() {
        return Err(Error::InvalidParameter(
            "index_over_ref must be built over ref_queries".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let k_eff = effective_k(k, ref_queries.rows());
    let values = (0..candidates.rows())
        .into_par_iter()
        .map(|i| {
            let hits = index_over_ref.search(candidates.row(i), k_eff, nprobe)?;
            Ok((alpha * mean_score(&hits)) as f32)
        })
        .collect::<Result<Vec<f32>>>()?;
    BiasVector::new(values, alpha, k_eff, fingerprint(ref_queries))
}

fn mean_score(hits: &[SearchHit]) -> f64 {
    if hits.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for h in hits {
        sum += h.score;
    }
    sum / hits.len() as f64
}

/// Top-k reference scores per candidate, reusable across many `(alpha, k)`
/// settings: for every `k <= depth` the bias equals what [`compute_bias`] would
/// return with an exact index.
#[derive(Debug, Clone)]
pub struct ReferenceNeighbors {
    /// Per candidate, its best `depth` reference scores in rank order.
    scores: Vec<Vec<f64>>,
    n_refs: usize,
    ref_fingerprint: u64,
}

impl ReferenceNeighbors {
    pub fn new(
        candidates: &EmbeddingMatrix,
        ref_queries: &EmbeddingMatrix,
        depth: usize,
        index_over_ref: &VectorIndex,
        nprobe: usize,
    ) -> Result<Self> {
        if ref_queries.rows() == 0 {
            return Err(Error::EmptyReferenceSet);
        }
        check_dim(ref_queries.dim(), candidates.dim())?;
        let depth = depth.clamp(1, ref_queries.rows());
        let scores = (0..candidates.rows())
            .into_par_iter()
            .map(|i| {
                Ok(index_over_ref
                    .search(candidates.row(i), depth, nprobe)?
                    .into_iter()
                    .map(|h| h.score)
                    .collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(ReferenceNeighbors {
            scores,
            n_refs: ref_queries.rows(),
            ref_fingerprint: fingerprint(ref_queries),
        })
    }

    pub fn bias(&self, alpha: f64, k: usize) -> Result<BiasVector> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let k_eff = effective_k(k, self.n_refs);
        let values = self
            .scores
            .iter()
            .map(|s| {
                let take = &s[..k_eff.min(s.len())];
                let mut sum = 0.0;
                for v in take {
                    sum += v;
                }
                let mean = if take.is_empty() { 0.0 } else { sum / take.len() as f64 };
                (alpha * mean) as f32
            })
            .collect();
        BiasVector::new(values, alpha, k_eff, self.ref_fingerprint)
    }
}

/// `scores[i] - bias[i]`.
pub fn debias_scores(scores: &[f64], bias: &BiasVector) -> Result<Vec<f64>> {
    check_len(bias.len(), scores.len())?;
    Ok(scores
        .iter()
        .zip(bias.values())
        .map(|(s, b)| s - f64::from(*b))
        .collect())
}

/// Appends each candidate's bias as an extra coordinate.
pub fn augment_candidates(candidates: &EmbeddingMatrix, bias: &BiasVector) -> Result<EmbeddingMatrix> {
    check_len(candidates.rows(), bias.len())?;
    let dim = candidates.dim() + 1;
    let mut data = Vec::with_capacity(candidates.rows() * dim);
    for (row, b) in candidates.iter_rows().zip(bias.values()) {
        data.extend_from_slice(row);
        data.push(*b);
    }
    EmbeddingMatrix::new(candidates.rows(), dim, data, false)
}

/// Appends `-1`, so that `augment_query(q) . augmented_r = q . r - b(r)`.
pub fn augment_query(query: &[f32]) -> Vec<f32> {
    let mut out = Vec::with_capacity(query.len() + 1);
    out.extend_from_slice(query);
    out.push(-1.0);
    out
}

pub fn augment_queries(queries: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let dim = queries.dim() + 1;
    let mut data = Vec::with_capacity(queries.rows() * dim);
    for row in queries.iter_rows() {
        data.extend_from_slice(row);
        data.push(-1.0);
    }
    EmbeddingMatrix::new(queries.rows(), dim, data, false)
}

/// Column means in f64, accumulated in row order.
pub fn column_mean(m: &EmbeddingMatrix) -> Result<Vec<f64>> {
    if m.rows() == 0 {
        return Err(Error::EmptyReferenceSet);
    }
    let mut sums = vec![0.0f64; m.dim()];
    for row in m.iter_rows() {
        for (s, &x) in sums.iter_mut().zip(row) {
            *s += f64::from(x);
        }
    }
    let n = m.rows() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Subtracts `mean` from every row.
pub fn subtract_mean(m: &EmbeddingMatrix, mean: &[f64]) -> Result<EmbeddingMatrix> {
    check_dim(m.dim(), mean.len())?;
    let data = m
        .iter_rows()
        .flat_map(|row| row.iter().zip(mean).map(|(&x, mu)| (f64::from(x) - mu) as f32))
        .collect();
    EmbeddingMatrix::new(m.rows(), m.dim(), data, false)
}

/// Distribution normalization: queries minus the mean reference query,
/// candidates minus the mean reference candidate.
pub fn dn_transform(
    queries: &EmbeddingMatrix,
    candidates: &EmbeddingMatrix,
    ref_queries: &EmbeddingMatrix,
    ref_candidates: &EmbeddingMatrix,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    let q_mean = column_mean(ref_queries)?;
    let c_mean = column_mean(ref_candidates)?;
    Ok((subtract_mean(queries, &q_mean)?, subtract_mean(candidates, &c_mean)?))
}

/// `max + ln sum exp(x - max)`.
fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Softmax denominator over one reference bank, precomputed per candidate:
/// `log_factor(s, i) = ln( exp(beta * s) / sum_{x in bank} exp(beta * s(x, r_i)) )`.
#[derive(Debug, Clone)]
pub struct BankSoftmax {
    beta: f64,
    log_denominators: Vec<f64>,
}

impl BankSoftmax {
    pub fn new(candidates: &EmbeddingMatrix, bank: &EmbeddingMatrix, beta: f64) -> Result<Self> {
        if bank.rows() == 0 {
            return Err(Error::EmptyReferenceSet);
        }
        check_dim(candidates.dim(), bank.dim())?;
        let log_denominators = (0..candidates.rows())
            .into_par_iter()
            .map(|i| {
                let s = score_all(candidates.row(i), bank);
                log_sum_exp(s.iter().map(|&x| beta * x))
            })
            .collect();
        Ok(BankSoftmax {
            beta,
            log_denominators,
        })
    }

    #[inline]
    pub fn log_factor(&self, score: f64, candidate: usize) -> f64 {
        self.beta * score - self.log_denominators[candidate]
    }
}

/// DualIS (both banks) or QBNorm (query bank only) scorer in the log domain.
#[derive(Debug, Clone)]
pub struct SoftmaxScorer {
    candidate_bank: Option<BankSoftmax>,
    query_bank: BankSoftmax,
}

impl SoftmaxScorer {
    pub fn dualis(
        candidates: &EmbeddingMatrix,
        ref_queries: &EmbeddingMatrix,
        ref_candidates: &EmbeddingMatrix,
        beta1: f64,
        beta2: f64,
    ) -> Result<Self> {
        Ok(SoftmaxScorer {
            candidate_bank: Some(BankSoftmax::new(candidates, ref_candidates, beta1)?),
            query_bank: BankSoftmax::new(candidates, ref_queries, beta2)?,
        })
    }

    pub fn qbnorm(candidates: &EmbeddingMatrix, ref_queries: &EmbeddingMatrix, beta2: f64) -> Result<Self> {
        Ok(SoftmaxScorer {
            candidate_bank: None,
            query_bank: BankSoftmax::new(candidates, ref_queries, beta2)?,
        })
    }

    /// `ln ŝ(q, r_i)` given the raw score `s(q, r_i)`.
    #[inline]
    pub fn log_score(&self, raw: f64, candidate: usize) -> f64 {
        let q = self.query_bank.log_factor(raw, candidate);
        match &self.candidate_bank {
            Some(r) => r.log_factor(raw, candidate) + q,
            None => q,
        }
    }

    pub fn log_scores(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(i, &s)| self.log_score(s, i))
            .collect()
    }
}

/// DualIS normalized scores `ŝ = ŝ^R * ŝ^Q` of one query against every candidate.
pub fn dualis_scores(
    query: &[f32],
    candidates: &EmbeddingMatrix,
    ref_queries: &EmbeddingMatrix,
    ref_candidates: &EmbeddingMatrix,
    beta1: f64,
    beta2: f64,
) -> Result<Vec<f64>> {
    check_dim(candidates.dim(), query.len())?;
    let scorer = SoftmaxScorer::dualis(candidates, ref_queries, ref_candidates, beta1, beta2)?;
    let raw = score_all(query, candidates);
    Ok(scorer.log_scores(&raw).into_iter().map(f64::exp).collect())
}

/// QBNorm scores: the query-bank factor `ŝ^Q` alone.
pub fn qbnorm_scores(
    query: &[f32],
    candidates: &EmbeddingMatrix,
    ref_queries: &EmbeddingMatrix,
    beta2: f64,
) -> Result<Vec<f64>> {
    check_dim(candidates.dim(), query.len())?;
    let scorer = SoftmaxScorer::qbnorm(candidates, ref_queries, beta2)?;
    let raw = score_all(query, candidates);
    Ok(scorer.log_scores(&raw).into_iter().map(f64::exp).collect())
}

/// Index of the highest score, lowest index on ties.
fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// DualDIS: DualIS scores when the query's raw top-1 is in `activation`,
/// raw scores otherwise.
pub fn dualdis_scores(
    query: &[f32],
    candidates: &EmbeddingMatrix,
    ref_queries: &EmbeddingMatrix,
    ref_candidates: &EmbeddingMatrix,
    beta1: f64,
    beta2: f64,
    activation: &BTreeSet<usize>,
) -> Result<Vec<f64>> {
    check_dim(candidates.dim(), query.len())?;
    let scorer = SoftmaxScorer::dualis(candidates, ref_queries, ref_candidates, beta1, beta2)?;
    let raw = score_all(query, candidates);
    match argmax(&raw) {
        Some(top) if activation.contains(&top) => {
            Ok(scorer.log_scores(&raw).into_iter().map(f64::exp).collect())
        }
        _ => Ok(raw),
    }
}

/// Candidates that are the top-1 hit for at least `threshold` reference queries.
pub fn build_activation_set(
    candidate_index: &VectorIndex,
    ref_queries: &EmbeddingMatrix,
    threshold: usize,
    nprobe: usize,
) -> Result<BTreeSet<usize>> {
    if ref_queries.rows() == 0 {
        return Err(Error::EmptyReferenceSet);
    }
    if threshold == 0 {
        return Err(Error::InvalidParameter("activation threshold must be at least 1".into()));
    }
    let table = candidate_index.batch_search(ref_queries, 1, nprobe)?;
    let mut counts = vec![0usize; candidate_index.base().rows()];
    for q in 0..table.len() {
        if let Some(c) = table.top1(q) {
            counts[c] += 1;
        }
    }
    Ok(counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= threshold)
        .map(|(c, _)| c)
        .collect())
}

/// Reference banks available to [`apply`].
#[derive(Debug, Clone, Copy, Default)]
pub struct References<'a> {
    pub queries: Option<&'a EmbeddingMatrix>,
    pub candidates: Option<&'a EmbeddingMatrix>,
}

#[derive(Debug, Clone)]
pub struct ApplyOptions {
    /// Hits kept per query.
    pub depth: usize,
    pub nprobe: usize,
    /// Precomputed NNN bias; when absent it is computed from the reference queries.
    pub bias: Option<BiasVector>,
    /// Index used over the reference queries when computing the NNN bias.
    pub bias_index: IndexConfig,
    /// Serve NNN through augmented embeddings and the candidate index instead of
    /// exhaustive debiased scoring.
    pub augmented: bool,
}

impl Default for ApplyOptions {
    fn default() -> Self {
        ApplyOptions {
            depth: 10,
            nprobe: DEFAULT_NPROBE,
            bias: None,
            bias_index: IndexConfig::Exact,
            augmented: false,
        }
    }
}

fn require<'a>(
    r: Option<&'a EmbeddingMatrix>,
    method: &'static str,
    what: &'static str,
) -> Result<&'a EmbeddingMatrix> {
    r.ok_or(Error::MissingReference { method, what })
}

/// Resolves the NNN bias for `apply`: the supplied one (validated) or a fresh one.
pub fn resolve_bias(
    candidates: &EmbeddingMatrix,
    refs: References<'_>,
    alpha: f64,
    k: usize,
    opts: &ApplyOptions,
) -> Result<BiasVector> {
    if let Some(bias) = &opts.bias {
        check_len(candidates.rows(), bias.len())?;
        if let Some(rq) = refs.queries {
            let current = fingerprint(rq);
            if current != bias.ref_fingerprint() {
                return Err(Error::BiasReferenceMismatch {
                    stored: bias.ref_fingerprint(),
                    current,
                });
            }
        }
        return Ok(bias.clone());
    }
    let rq = require(refs.queries, "nnn", "reference queries")?;
    let index = opts.bias_index.build(Arc::new(rq.clone()))?;
    compute_bias(candidates, rq, alpha, k, &index, opts.nprobe)
}

fn rank_exhaustive(
    queries: &EmbeddingMatrix,
    candidates: &EmbeddingMatrix,
    depth: usize,
    score: impl Fn(usize, &[f64]) -> Vec<f64> + Sync,
) -> Result<RankingTable> {
    check_dim(candidates.dim(), queries.dim())?;
    let rows = (0..queries.rows())
        .into_par_iter()
        .map(|qi| {
            let raw = score_all(queries.row(qi), candidates);
            let scored = score(qi, &raw);
            top_k_of(scored.into_iter().enumerate(), depth)
        })
        .collect();
    Ok(RankingTable::from_sorted(rows))
}

/// Ranks every query under `spec`. `candidate_index` is built over the
/// candidates and serves raw search (and the NNN augmented path).
pub fn apply(
    spec: &NormalizationSpec,
    queries: &EmbeddingMatrix,
    candidate_index: &VectorIndex,
    refs: References<'_>,
    opts: &ApplyOptions,
) -> Result<RankingTable> {
    spec.validate()?;
    if opts.depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    let candidates = candidate_index.base();
    check_dim(candidates.dim(), queries.dim())?;
    let depth = opts.depth;
    match *spec {
        NormalizationSpec::Raw => candidate_index.batch_search(queries, depth, opts.nprobe),
        NormalizationSpec::Nnn { alpha, k } => {
            let bias = resolve_bias(candidates, refs, alpha, k, opts)?;
            if opts.augmented {
                let aug = augment_candidates(candidates, &bias)?;
                let index = candidate_index.rebuild_over(Arc::new(aug))?;
                index.batch_search(&augment_queries(queries)?, depth, opts.nprobe)
            } else {
                rank_exhaustive(queries, candidates, depth, |_, raw| {
                    raw.iter()
                        .zip(bias.values())
                        .map(|(s, b)| s - f64::from(*b))
                        .collect()
                })
            }
        }
        NormalizationSpec::Dn => {
            let rq = require(refs.queries, "dn", "reference queries")?;
            let rc = require(refs.candidates, "dn", "reference candidates")?;
            let (q2, c2) = dn_transform(queries, candidates, rq, rc)?;
            let index = candidate_index.rebuild_over(Arc::new(c2))?;
            index.batch_search(&q2, depth, opts.nprobe)
        }
        NormalizationSpec::QbNorm { beta2 } => {
            let rq = require(refs.queries, "qbnorm", "reference queries")?;
            let scorer = SoftmaxScorer::qbnorm(candidates, rq, beta2)?;
            rank_exhaustive(queries, candidates, depth, |_, raw| scorer.log_scores(raw))
        }
        NormalizationSpec::DualIs { beta1, beta2 } => {
            let rq = require(refs.queries, "dualis", "reference queries")?;
            let rc = require(refs.candidates, "dualis", "reference candidates")?;
            let scorer = SoftmaxScorer::dualis(candidates, rq, rc, beta1, beta2)?;
            rank_exhaustive(queries, candidates, depth, |_, raw| scorer.log_scores(raw))
        }
        NormalizationSpec::DualDis {
            beta1,
            beta2,
            activation_threshold,
        } => {
            let rq = require(refs.queries, "dualdis", "reference queries")?;
            let rc = require(refs.candidates, "dualdis", "reference candidates")?;
            let scorer = SoftmaxScorer::dualis(candidates, rq, rc, beta1, beta2)?;
            let activation =
                build_activation_set(candidate_index, rq, activation_threshold, opts.nprobe)?;
            rank_exhaustive(queries, candidates, depth, |_, raw| match argmax(raw) {
                Some(top) if activation.contains(&top) => scorer.log_scores(raw),
                _ => raw.to_vec(),
            })
        }
    }
}

/// Full raw score matrix, `queries.rows() x candidates.rows()`, row-major.
pub fn score_matrix(queries: &EmbeddingMatrix, candidates: &EmbeddingMatrix) -> Result<Vec<Vec<f64>>> {
    check_dim(candidates.dim(), queries.dim())?;
    Ok((0..queries.rows())
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; candidates.rows()];
            for_each_score(queries.row(i), candidates, |j, s| row[j] = s);
            row
        })
        .collect())
}
