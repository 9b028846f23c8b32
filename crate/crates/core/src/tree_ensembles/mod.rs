//! Decision-tree baselines: CART, random forest, AdaBoost (SAMME on stumps),
//! and gradient boosting with Newton leaf values.

mod boost;
mod builder;
mod forest;

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::text_features::SparseVector;
use crate::{Error, Result};

use builder::{Builder, FeatureIndex, FeatureSampling, GiniCriterion};

pub use boost::{fit_adaboost, fit_gradient_boost, AdaBoostModel, BoostState, GbConfig, GbModel};
pub use forest::{fit_random_forest, ForestConfig, ForestModel};

/// A fitted tree. Internal nodes send `x[feature] ≤ threshold` to the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        #[serde(with = "crate::numfmt::scalar")]
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Positive-class share for classification trees, fitted value for
        /// regression trees.
        #[serde(rename = "leaf_value", with = "crate::numfmt::scalar")]
        value: f64,
        /// Per-class weights, or the sample count for regression trees.
        #[serde(with = "crate::numfmt::vec")]
        counts: Vec<f64>,
    },
}

impl TreeNode {
    pub fn value(&self, x: &SparseVector) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x.get(*feature) <= *threshold { left } else { right },
            }
        }
    }

    /// Classification label: positive only with a strict majority.
    pub fn label(&self, x: &SparseVector) -> u8 {
        u8::from(self.value(x) > 0.5)
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

/// `1 − Σ p_c²`.
pub fn gini(counts: &[f64]) -> Result<f64> {
    let total: f64 = counts.iter().sum();
    if counts.iter().any(|&c| c < 0.0) || total <= 0.0 {
        return Err(Error::invalid("gini needs non-negative counts with a positive total"));
    }
    Ok(1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>())
}

pub(crate) fn check_xy(x: &[SparseVector], y: &[u8]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let dim = x[0].dim();
    if let Some(r) = x.iter().find(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: r.dim(),
        });
    }
    Ok(dim)
}

pub(crate) fn require_two_classes(y: &[u8]) -> Result<()> {
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, x: &SparseVector) -> Result<()> {
    if x.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: x.dim(),
        });
    }
    Ok(())
}

/// Classification tree with sample weights and multiplicities.
#[allow(clippy::too_many_arguments)]
pub(crate) fn grow_classifier(
    index: &FeatureIndex<'_>,
    y: &[u8],
    weights: &[f64],
    counts: &[f64],
    max_depth: usize,
    sampling: FeatureSampling,
    rng: Option<&mut Rng>,
) -> TreeNode {
    let rows: Vec<usize> = (0..y.len()).filter(|&r| counts[r] > 0.0).collect();
    let criterion = GiniCriterion {
        labels: y,
        weights,
        counts,
    };
    Builder::new(index, criterion, max_depth, sampling, rng).grow(rows)
}

/// Greedy Gini CART. With `max_features = Some(m)` each node evaluates `m`
/// randomly ordered features that admit a split; `None` evaluates all.
pub fn fit_tree(
    x: &[SparseVector],
    y: &[u8],
    max_depth: usize,
    max_features: Option<usize>,
    rng: &mut Rng,
) -> Result<TreeNode> {
    let dim = check_xy(x, y)?;
    let index = FeatureIndex::new(x, dim);
    let ones = vec![1.0; x.len()];
    let sampling = match max_features {
        Some(m) if m < dim => FeatureSampling::Random(m.max(1)),
        _ => FeatureSampling::All,
    };
    Ok(grow_classifier(&index, y, &ones, &ones, max_depth, sampling, Some(rng)))
}

/// Label and score of a fitted ensemble.
pub trait EnsemblePredict {
    fn predict(&self, x: &SparseVector) -> Result<(u8, f64)>;
}
