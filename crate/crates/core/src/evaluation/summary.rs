use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Five-number summary plus mean, sample standard deviation, and 1.5·IQR
/// outliers. Whiskers end at the most extreme non-outlier scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSummary {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Ascending.
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize_scores(scores: &[f64]) -> Result<ScoreSummary> {
    if scores.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 scores to summarize, got {}", scores.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |s: &f64| (lo_fence..=hi_fence).contains(s);
    let outliers: Vec<f64> = sorted.iter().copied().filter(|s| !inside(s)).collect();
    let whisker_low = sorted.iter().copied().find(inside).unwrap_or(q1);
    let whisker_high = sorted.iter().rev().copied().find(inside).unwrap_or(q3);
    Ok(ScoreSummary {
        median: quantile(&sorted, 0.5),
        mean,
        std: var.sqrt(),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}
