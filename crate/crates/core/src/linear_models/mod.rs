//! Probabilistic and linear baselines: multinomial naive Bayes, L2 logistic
//! regression, elastic-net hinge SGD, and a linear SVM.

mod logistic;
mod mnb;
mod sgd;
mod svm;

use serde::{Deserialize, Serialize};

use crate::text_features::{SparseVector, Vocabulary};
use crate::{Error, Result};

pub use logistic::{fit_logreg, logistic_gradient, logistic_objective, LOGREG_MAX_ITER, LOGREG_TOLERANCE};
pub use mnb::{fit_mnb, MnbModel};
pub use sgd::{fit_sgd_linear, sgd_objective, SgdConfig};
pub use svm::{fit_svm, svm_objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Logistic,
    Hinge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// `½‖w‖² + C · Σ loss`
    Inverse { c: f64 },
    /// `α · (ρ‖w‖₁ + (1 − ρ)·½‖w‖²)` added to the mean loss.
    ElasticNet { alpha: f64, l1_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(with = "crate::numfmt::vec")]
    pub weights: Vec<f64>,
    #[serde(with = "crate::numfmt::scalar")]
    pub bias: f64,
    pub loss: LossKind,
    pub regularization: Regularization,
}

/// Label, raw decision score, and (logistic models only) `σ(score)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPrediction {
    pub label: u8,
    pub score: f64,
    pub probability: Option<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearModel {
    pub fn decision(&self, x: &SparseVector) -> Result<f64> {
        if x.dim() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x.dim(),
            });
        }
        Ok(x.dot_dense(&self.weights) + self.bias)
    }

    /// Positive class only on a strictly positive score.
    pub fn predict(&self, x: &SparseVector) -> Result<LinearPrediction> {
        let score = self.decision(x)?;
        Ok(LinearPrediction {
            label: u8::from(score > 0.0),
            score,
            probability: (self.loss == LossKind::Logistic).then(|| sigmoid(score)),
        })
    }
}

/// `±1` targets; errors unless both classes are present.
pub(crate) fn signed_targets(x: &[SparseVector], y: &[u8]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    if let Some(row) = x.iter().find(|r| r.dim() != x[0].dim()) {
        return Err(Error::DimensionMismatch {
            expected: x[0].dim(),
            got: row.dim(),
        });
    }
    Ok(y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub positive: Vec<(String, f64)>,
    pub negative: Vec<(String, f64)>,
}

/// The `k` largest and `k` smallest weights with their terms; equal weights
/// are ordered by term.
pub fn top_coefficients(model: &LinearModel, vocab: &Vocabulary, k: usize) -> Result<CoefficientReport> {
    if model.weights.len() != vocab.len() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            got: model.weights.len(),
        });
    }
    let k = k.min(vocab.len());
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    let by_term = |a: &usize, b: &usize| vocab.term(*a).cmp(vocab.term(*b));
    order.sort_by(|a, b| model.weights[*b].total_cmp(&model.weights[*a]).then_with(|| by_term(a, b)));
    let pick = |idx: &[usize]| -> Vec<(String, f64)> {
        idx.iter().map(|&i| (vocab.term(i).to_owned(), model.weights[i])).collect()
    };
    let positive = pick(&order[..k]);
    order.sort_by(|a, b| model.weights[*a].total_cmp(&model.weights[*b]).then_with(|| by_term(a, b)));
    let negative = pick(&order[..k]);
    Ok(CoefficientReport { positive, negative })
}

#[cfg(test)]
pub(crate) mod toy {
    use crate::text_features::{NgramRange, SparseVector, Vectorizer};

    /// Four documents whose classes use disjoint vocabularies.
    pub fn separable() -> (Vec<SparseVector>, Vec<u8>, Vectorizer) {
        let texts = ["missing tests here", "not done and missing", "great work", "well done great"];
        let vz = Vectorizer::fit(&texts, NgramRange::BIGRAMS).unwrap();
        (vz.transform_all(&texts), vec![1, 1, 0, 0], vz)
    }
}

#[cfg(test)]
mod tests;
