use serde::{Deserialize, Serialize};

use super::builder::{Builder, FeatureIndex, FeatureSampling, RegressionCriterion};
use super::{check_dim, check_xy, grow_classifier, require_two_classes, EnsemblePredict, TreeNode};
use crate::linear_models::sigmoid;
use crate::text_features::SparseVector;
use crate::{Error, Result};

const ERROR_FLOOR: f64 = 1e-10;

/// Sample weights and stage multipliers left by AdaBoost training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostState {
    pub sample_weights: Vec<f64>,
    pub stage_weights: Vec<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub stumps: Vec<TreeNode>,
    #[serde(with = "crate::numfmt::vec")]
    pub stage_weights: Vec<f64>,
    pub learning_rate: f64,
    pub dim: usize,
}

/// SAMME with depth-1 Gini stumps.
///
/// `α_m = lr · ln((1 − err_m) / err_m)` with `err_m` floored at 1e-10;
/// misclassified weights grow by `exp(α_m)` and are renormalized. Boosting
/// stops before a stage with `err_m ≥ 0.5`, and right after a perfect stage.
pub fn fit_adaboost(
    x: &[SparseVector],
    y: &[u8],
    n_estimators: usize,
    learning_rate: f64,
) -> Result<(AdaBoostModel, BoostState)> {
    if !(learning_rate > 0.0) {
        return Err(Error::invalid(format!("learning rate must be positive, got {learning_rate}")));
    }
    let dim = check_xy(x, y)?;
    require_two_classes(y)?;
    let index = FeatureIndex::new(x, dim);
    let n = x.len();
    let ones = vec![1.0; n];
    let mut weights = vec![1.0 / n as f64; n];
    let mut stumps = Vec::new();
    let mut stage_weights = Vec::new();
    for _ in 0..n_estimators {
        let stump = grow_classifier(&index, y, &weights, &ones, 1, FeatureSampling::All, None);
        let missed: Vec<bool> = x.iter().zip(y).map(|(r, &l)| stump.label(r) != l).collect();
        let total: f64 = weights.iter().sum();
        let err: f64 = weights
            .iter()
            .zip(&missed)
            .filter(|(_, &m)| m)
            .map(|(w, _)| w)
            .sum::<f64>()
            / total;
        if err >= 0.5 {
            break;
        }
        let floored = err.max(ERROR_FLOOR);
        let alpha = learning_rate * ((1.0 - floored) / floored).ln();
        stumps.push(stump);
        stage_weights.push(alpha);
        if err <= ERROR_FLOOR {
            break;
        }
        let factor = alpha.exp();
        for (w, &m) in weights.iter_mut().zip(&missed) {
            if m {
                *w *= factor;
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let state = BoostState {
        sample_weights: weights,
        stage_weights: stage_weights.clone(),
        learning_rate,
    };
    Ok((
        AdaBoostModel {
            stumps,
            stage_weights,
            learning_rate,
            dim,
        },
        state,
    ))
}

impl AdaBoostModel {
    /// `Σ α_m h_m(x) / Σ α_m` with `h_m ∈ {−1, +1}`.
    pub fn normalized_margin(&self, x: &SparseVector) -> f64 {
        let total: f64 = self.stage_weights.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let margin: f64 = self
            .stumps
            .iter()
            .zip(&self.stage_weights)
            .map(|(s, a)| if s.label(x) == 1 { *a } else { -*a })
            .sum();
        margin / total
    }
}

impl EnsemblePredict for AdaBoostModel {
    fn predict(&self, x: &SparseVector) -> Result<(u8, f64)> {
        check_dim(self.dim, x)?;
        let m = self.normalized_margin(x);
        Ok((u8::from(m > 0.0), m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for GbConfig {
    fn default() -> Self {
        GbConfig {
            n_estimators: 150,
            learning_rate: 0.3,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbModel {
    /// Log-odds of the training base rate.
    #[serde(with = "crate::numfmt::scalar")]
    pub initial_score: f64,
    pub stages: Vec<TreeNode>,
    pub shrinkage: f64,
    pub dim: usize,
}

/// Logistic-loss gradient boosting. Each stage fits a squared-error
/// regression tree to `y − p` and replaces leaf values with the Newton step
/// `Σ r / Σ p(1 − p)` over the leaf.
pub fn fit_gradient_boost(x: &[SparseVector], y: &[u8], cfg: &GbConfig) -> Result<GbModel> {
    let dim = check_xy(x, y)?;
    require_two_classes(y)?;
    let index = FeatureIndex::new(x, dim);
    let n = x.len();
    let base = y.iter().filter(|&&l| l == 1).count() as f64 / n as f64;
    let initial_score = (base / (1.0 - base)).ln();
    let mut scores = vec![initial_score; n];
    let mut stages = Vec::with_capacity(cfg.n_estimators);
    for _ in 0..cfg.n_estimators {
        let probs: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
        let residuals: Vec<f64> = y.iter().zip(&probs).map(|(&l, p)| l as f64 - p).collect();
        let leaf_value = |rows: &[usize]| {
            let num: f64 = rows.iter().map(|&r| residuals[r]).sum();
            let den: f64 = rows.iter().map(|&r| probs[r] * (1.0 - probs[r])).sum();
            if den.abs() < 1e-150 {
                0.0
            } else {
                num / den
            }
        };
        let criterion = RegressionCriterion {
            targets: &residuals,
            leaf_value,
        };
        let tree = Builder::new(&index, criterion, cfg.max_depth, FeatureSampling::All, None)
            .grow((0..n).collect());
        for (s, row) in scores.iter_mut().zip(x) {
            *s += cfg.learning_rate * tree.value(row);
        }
        stages.push(tree);
    }
    Ok(GbModel {
        initial_score,
        stages,
        shrinkage: cfg.learning_rate,
        dim,
    })
}

impl GbModel {
    /// Raw additive score `F(x)`.
    pub fn decision(&self, x: &SparseVector) -> f64 {
        self.initial_score + self.shrinkage * self.stages.iter().map(|t| t.value(x)).sum::<f64>()
    }

    /// Mean training log-loss after 0, 1, …, |stages| stages.
    pub fn staged_log_loss(&self, x: &[SparseVector], y: &[u8]) -> Vec<f64> {
        let mut scores = vec![self.initial_score; x.len()];
        let loss = |scores: &[f64]| {
            scores
                .iter()
                .zip(y)
                .map(|(&s, &l)| {
                    let m = if l == 1 { s } else { -s };
                    if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() }
                })
                .sum::<f64>()
                / y.len() as f64
        };
        let mut out = vec![loss(&scores)];
        for tree in &self.stages {
            for (s, row) in scores.iter_mut().zip(x) {
                *s += self.shrinkage * tree.value(row);
            }
            out.push(loss(&scores));
        }
        out
    }
}

impl EnsemblePredict for GbModel {
    fn predict(&self, x: &SparseVector) -> Result<(u8, f64)> {
        check_dim(self.dim, x)?;
        let p = sigmoid(self.decision(x));
        Ok((u8::from(p > 0.5), p))
    }
}
