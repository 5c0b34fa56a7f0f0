//! Hubness diagnostics: how many queries pick each candidate as their top-1,
//! and how heavy-tailed that distribution is.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ranking::RankingTable;

/// Per-candidate count of queries whose top-1 hit is that candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedCounts {
    pub counts: Vec<u64>,
    pub total_queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HubReport {
    /// Fisher excess kurtosis over candidates, population moments.
    pub kurtosis: f64,
    /// Mean absolute deviation of counts from their mean.
    pub mae: f64,
    pub max: u64,
    /// Matched count -> number of candidates with that count.
    pub histogram: BTreeMap<u64, u64>,
}

/// `after - before` and `after / before` per metric; ratios are `None` when
/// `before` is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDeltas {
    pub kurtosis_delta: f64,
    pub kurtosis_ratio: Option<f64>,
    pub mae_delta: f64,
    pub mae_ratio: Option<f64>,
    pub max_delta: i64,
    pub max_ratio: Option<f64>,
}

pub fn matched_counts(table: &RankingTable, n_candidates: usize) -> Result<MatchedCounts> {
    let mut counts = vec![0u64; n_candidates];
    let mut total = 0u64;
    for q in 0..table.len() {
        if let Some(c) = table.top1(q) {
            if c >= n_candidates {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    bound: n_candidates,
                });
            }
            counts[c] += 1;
            total += 1;
        }
    }
    Ok(MatchedCounts {
        counts,
        total_queries: total,
    })
}

pub fn hub_report(mc: &MatchedCounts) -> Result<HubReport> {
    let n = mc.counts.len();
    if n < 2 {
        return Err(Error::DegenerateDistribution);
    }
    let xs: Vec<f64> = mc.counts.iter().map(|&c| c as f64).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let central = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n as f64;
    let m2 = central(2);
    if m2 == 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let m4 = central(4);
    let mae = xs.iter().map(|x| (x - mean).abs()).sum::<f64>() / n as f64;
    let mut histogram = BTreeMap::new();
    for &c in &mc.counts {
        *histogram.entry(c).or_insert(0) += 1;
    }
    Ok(HubReport {
        kurtosis: m4 / (m2 * m2) - 3.0,
        mae,
        max: mc.counts.iter().copied().max().unwrap_or(0),
        histogram,
    })
}

pub fn compare_reports(before: &HubReport, after: &HubReport) -> ReportDeltas {
    let ratio = |a: f64, b: f64| if b == 0.0 { None } else { Some(a / b) };
    ReportDeltas {
        kurtosis_delta: after.kurtosis - before.kurtosis,
        kurtosis_ratio: ratio(after.kurtosis, before.kurtosis),
        mae_delta: after.mae - before.mae,
        mae_ratio: ratio(after.mae, before.mae),
        max_delta: after.max as i64 - before.max as i64,
        max_ratio: ratio(after.max as f64, before.max as f64),
    }
}
