//! Evaluation metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, MarsError, Result};
use crate::sensor::{loss_reconstruction, SensorModel};
use crate::tensor::{frob_sq_diff_sparse, EventTensor};

/// Metric names used in metric reports.
pub mod keys {
    pub const RMSE: &str = "rmse";
    pub const HR2: &str = "hr@2";
    pub const HR4: &str = "hr@4";
    pub const MAP2: &str = "map@2";
    pub const MAP4: &str = "map@4";
    pub const RECON_DONATION: &str = "recon_donation";
    pub const RECON_RESPONSE: &str = "recon_response";
}

/// Metric name to value, serialized with sorted keys.
pub type MetricsReport = BTreeMap<String, f64>;

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return dim_err(format!(
            "{} predictions for {} targets",
            predicted.len(),
            actual.len()
        ));
    }
    if predicted.is_empty() {
        return Err(MarsError::InvalidInput("rmse of an empty list".into()));
    }
    let sse: f64 = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

/// One ranked list with the items that count as hits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingCase<T> {
    pub ranked: Vec<T>,
    pub relevant: Vec<T>,
}

fn check_cases<T>(cases: &[RankingCase<T>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(MarsError::InvalidInput("k must be at least 1".into()));
    }
    if cases.is_empty() {
        return Err(MarsError::InvalidInput("no evaluation cases".into()));
    }
    if cases.iter().any(|c| c.relevant.is_empty()) {
        return Err(MarsError::InvalidInput(
            "every case needs at least one relevant item".into(),
        ));
    }
    Ok(())
}

/// Fraction of cases with a relevant item in the top `k`.
pub fn hit_ratio_at_k<T: PartialEq>(cases: &[RankingCase<T>], k: usize) -> Result<f64> {
    check_cases(cases, k)?;
    let hits = cases
        .iter()
        .filter(|c| c.ranked.iter().take(k).any(|x| c.relevant.contains(x)))
        .count();
    Ok(hits as f64 / cases.len() as f64)
}

/// Mean over cases of average precision truncated at `k`, normalized by
/// `min(|relevant|, k)`.
pub fn map_at_k<T: PartialEq>(cases: &[RankingCase<T>], k: usize) -> Result<f64> {
    check_cases(cases, k)?;
    let mut total = 0.0;
    for c in cases {
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (i, x) in c.ranked.iter().take(k).enumerate() {
            if c.relevant.contains(x) {
                hits += 1;
                ap += hits as f64 / (i + 1) as f64;
            }
        }
        total += ap / c.relevant.len().min(k) as f64;
    }
    Ok(total / cases.len() as f64)
}

/// Ranks starting at 1; tied values share their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// Zero when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return dim_err(format!("{} values against {}", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MarsError::InvalidInput(
            "rank correlation needs at least two points".into(),
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(MarsError::InvalidInput("rank correlation of NaN".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Per-cell average reconstruction error of each tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconReport {
    pub donation_loss: f64,
    pub response_loss: f64,
}

pub fn reconstruction_report(
    m: &SensorModel,
    td: &EventTensor,
    tr: &EventTensor,
) -> Result<ReconReport> {
    loss_reconstruction(m, td, tr)?;
    let cells = td.dims().cells() as f64;
    Ok(ReconReport {
        donation_loss: frob_sq_diff_sparse(&m.factors.reconstruct_donation()?, td)? / cells,
        response_loss: frob_sq_diff_sparse(&m.factors.reconstruct_response()?, tr)? / cells,
    })
}
