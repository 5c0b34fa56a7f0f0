#![allow(dead_code)]

pub mod pipeline;

use std::sync::Arc;

use nnn_core::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-norm Gaussian rows.
pub fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> EmbeddingMatrix {
    let mut data = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.iter().map(|x| (x / n) as f32));
    }
    EmbeddingMatrix::new(rows, dim, data, false).unwrap()
}

pub fn arc(m: EmbeddingMatrix) -> Arc<EmbeddingMatrix> {
    Arc::new(m)
}

/// Plain double-precision inner product, written out independently of the library.
pub fn naive_dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for j in 0..a.len() {
        s += a[j] as f64 * b[j] as f64;
    }
    s
}

/// Best `k` (candidate, score) by score descending, then index ascending.
pub fn naive_top_k(scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    for i in 0..idx.len() {
        for j in (i + 1)..idx.len() {
            let (a, b) = (idx[i], idx[j]);
            if scores[b] > scores[a] || (scores[b] == scores[a] && b < a) {
                idx.swap(i, j);
            }
        }
    }
    idx.into_iter().take(k).map(|i| (i, scores[i])).collect()
}

/// Brute-force NNN bias from the full score matrix.
pub fn naive_bias(cands: &EmbeddingMatrix, refs: &EmbeddingMatrix, alpha: f64, k: usize) -> Vec<f64> {
    (0..cands.rows())
        .map(|c| {
            let mut col: Vec<f64> = (0..refs.rows()).map(|r| naive_dot(refs.row(r), cands.row(c))).collect();
            col.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let k = k.min(col.len());
            alpha * col[..k].iter().sum::<f64>() / k as f64
        })
        .collect()
}

/// Number of discordant pairs between two full rankings of the same items.
pub fn kendall_distance(a: &[usize], b: &[usize]) -> usize {
    let mut pos = vec![0usize; a.len()];
    for (i, &c) in b.iter().enumerate() {
        pos[c] = i;
    }
    let mut d = 0;
    for i in 0..a.len() {
        for j in (i + 1)..a.len() {
            if pos[a[i]] > pos[a[j]] {
                d += 1;
            }
        }
    }
    d
}
