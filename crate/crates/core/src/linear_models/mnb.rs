use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::text_features::SparseVector;
use crate::{Error, Result};

/// Multinomial naive Bayes over non-negative feature values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnbModel {
    /// `ln p(c)` for c = 0, 1.
    #[serde(with = "crate::numfmt::vec")]
    pub log_prior: Vec<f64>,
    /// `ln p(t | c)`, one row per class.
    pub log_likelihood: [LogRow; 2],
    #[serde(with = "crate::numfmt::scalar")]
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogRow(#[serde(with = "crate::numfmt::vec")] pub Vec<f64>);

/// `p(t|c) = (count(t,c) + α) / (Σ_t count(t,c) + α|V|)`, priors from class frequencies.
pub fn fit_mnb(x: &[SparseVector], y: &[u8], alpha: f64) -> Result<MnbModel> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("smoothing must be positive, got {alpha}")));
    }
    super::signed_targets(x, y)?;
    let dim = x[0].dim();
    let mut counts = [vec![0.0; dim], vec![0.0; dim]];
    let mut docs = [0usize; 2];
    for (row, &label) in x.iter().zip(y) {
        let c = label as usize;
        docs[c] += 1;
        for (i, v) in row.iter() {
            if v < 0.0 {
                return Err(Error::invalid("naive Bayes features must be non-negative"));
            }
            counts[c][i] += v;
        }
    }
    let n = x.len() as f64;
    let log_likelihood = counts.map(|row| {
        let total: f64 = row.iter().sum::<f64>() + alpha * dim as f64;
        LogRow(row.iter().map(|c| ((c + alpha) / total).ln()).collect())
    });
    Ok(MnbModel {
        log_prior: docs.iter().map(|&d| (d as f64 / n).ln()).collect(),
        log_likelihood,
        alpha,
    })
}

impl MnbModel {
    pub fn dim(&self) -> usize {
        self.log_likelihood[0].0.len()
    }

    /// Unnormalized `ln p(c) + Σ x_t ln p(t|c)` per class.
    pub fn joint_log_likelihood(&self, x: &SparseVector) -> Result<[f64; 2]> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Ok([0, 1].map(|c| self.log_prior[c] + x.dot_dense(&self.log_likelihood[c].0)))
    }

    /// Normalized `ln p(c | x)`.
    pub fn log_posteriors(&self, x: &SparseVector) -> Result<[f64; 2]> {
        let jll = self.joint_log_likelihood(x)?;
        let m = jll[0].max(jll[1]);
        let log_z = m + ((jll[0] - m).exp() + (jll[1] - m).exp()).ln();
        Ok(jll.map(|v| v - log_z))
    }

    /// Label by the larger joint log-likelihood (ties → 0), score `p(1 | x)`.
    pub fn predict(&self, x: &SparseVector) -> Result<(u8, f64)> {
        let jll = self.joint_log_likelihood(x)?;
        Ok((u8::from(jll[1] > jll[0]), sigmoid(jll[1] - jll[0])))
    }
}
