//! Ranked hit lists and deterministic top-k selection.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One retrieved candidate with its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    #[serde(rename = "cand")]
    pub candidate: usize,
    pub score: f64,
}

impl SearchHit {
    pub fn new(candidate: usize, score: f64) -> Self {
        // Folds -0.0 into +0.0 so equal scores always tie-break on index.
        SearchHit {
            candidate,
            score: score + 0.0,
        }
    }
}

/// Higher score first, then lower candidate index.
pub fn rank_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.candidate.cmp(&b.candidate))
}

/// Streaming top-k accumulator under [`rank_order`].
///
/// Keeps at most `2k` hits buffered; whenever the buffer fills it is cut back
/// to the best `k` and the k-th best becomes the admission threshold.
#[derive(Debug)]
pub struct TopK {
    k: usize,
    buf: Vec<SearchHit>,
    threshold: Option<SearchHit>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            buf: Vec::with_capacity(2 * k.min(4096)),
            threshold: None,
        }
    }

    #[inline]
    pub fn push(&mut self, candidate: usize, score: f64) {
        if self.k == 0 {
            return;
        }
        let hit = SearchHit::new(candidate, score);
        if let Some(t) = &self.threshold {
            if rank_order(&hit, t) != Ordering::Less {
                return;
            }
        }
        self.buf.push(hit);
        if self.buf.len() >= 2 * self.k {
            self.compact();
        }
    }

    fn compact(&mut self) {
        let k = self.k;
        self.buf.select_nth_unstable_by(k - 1, rank_order);
        self.buf.truncate(k);
        self.threshold = Some(self.buf[k - 1]);
    }

    pub fn into_sorted(mut self) -> Vec<SearchHit> {
        self.buf.sort_unstable_by(rank_order);
        self.buf.truncate(self.k);
        self.buf
    }
}

/// Ranks `(candidate, score)` pairs and keeps the best `k`.
pub fn top_k_of(scores: impl IntoIterator<Item = (usize, f64)>, k: usize) -> Vec<SearchHit> {
    let mut top = TopK::new(k);
    for (c, s) in scores {
        top.push(c, s);
    }
    top.into_sorted()
}

/// Per-query ordered hits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankingTable {
    rows: Vec<Vec<SearchHit>>,
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    query: usize,
    hits: Vec<SearchHit>,
}

impl RankingTable {
    /// Wraps hit lists, checking ordering and uniqueness within each query.
    pub fn new(rows: Vec<Vec<SearchHit>>) -> Result<Self> {
        for (q, hits) in rows.iter().enumerate() {
            for w in hits.windows(2) {
                if rank_order(&w[0], &w[1]) != Ordering::Less {
                    return Err(Error::InvalidParameter(format!(
                        "query {q}: hits out of rank order at candidate {}",
                        w[1].candidate
                    )));
                }
            }
            let mut seen: Vec<usize> = hits.iter().map(|h| h.candidate).collect();
            seen.sort_unstable();
            if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(format!(
                    "query {q}: duplicate candidate {}",
                    w[0]
                )));
            }
        }
        Ok(RankingTable { rows })
    }

    pub(crate) fn from_sorted(rows: Vec<Vec<SearchHit>>) -> Self {
        RankingTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn hits(&self, query: usize) -> &[SearchHit] {
        &self.rows[query]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[SearchHit]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn top1(&self, query: usize) -> Option<usize> {
        self.rows[query].first().map(|h| h.candidate)
    }

    /// Candidate ids only, per query.
    pub fn candidate_lists(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|h| h.candidate).collect())
            .collect()
    }

    /// Selects queries by index, renumbering them by position.
    pub fn select_queries(&self, queries: &[usize]) -> Self {
        RankingTable {
            rows: queries.iter().map(|&q| self.rows[q].clone()).collect(),
        }
    }

    /// JSON-lines: one `{"query": i, "hits": [{"cand": c, "score": s}, ...]}` per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (query, hits) in self.rows.iter().enumerate() {
            let line = serde_json::to_string(&JsonRow {
                query,
                hits: hits.clone(),
            })?;
            writeln!(w, "{line}").map_err(|e| Error::io("<jsonl>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_jsonl(&mut out)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<jsonl>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: JsonRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if row.query != rows.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected query {}, found {}", rows.len(), row.query),
                });
            }
            rows.push(row.hits);
        }
        Self::new(rows)
    }
}
