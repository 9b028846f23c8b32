use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::builder::{FeatureIndex, FeatureSampling};
use super::{check_dim, check_xy, grow_classifier, require_two_classes, EnsemblePredict, TreeNode};
use crate::rng::{self, purpose};
use crate::text_features::SparseVector;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per node; `None` means `floor(√d)`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 300,
            max_depth: 100,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features: usize,
    pub seed: u64,
    pub dim: usize,
}

/// Bagged Gini trees. Tree `t` draws its bootstrap sample and feature orders
/// from stream `(seed, t)`, so the result does not depend on thread scheduling.
pub fn fit_random_forest(x: &[SparseVector], y: &[u8], cfg: &ForestConfig) -> Result<ForestModel> {
    let dim = check_xy(x, y)?;
    require_two_classes(y)?;
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| (dim as f64).sqrt().floor() as usize)
        .clamp(1, dim.max(1));
    let index = FeatureIndex::new(x, dim);
    let ones = vec![1.0; x.len()];
    let sampling = if max_features >= dim {
        FeatureSampling::All
    } else {
        FeatureSampling::Random(max_features)
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(cfg.seed, purpose::FOREST_BASE + t as u64);
            let counts = if cfg.bootstrap {
                let mut c = vec![0.0; x.len()];
                for _ in 0..x.len() {
                    c[rng.gen_range(0..x.len())] += 1.0;
                }
                c
            } else {
                ones.clone()
            };
            grow_classifier(&index, y, &counts, &counts, cfg.max_depth, sampling, Some(&mut rng))
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_trees: cfg.n_trees,
        max_depth: cfg.max_depth,
        max_features,
        seed: cfg.seed,
        dim,
    })
}

impl EnsemblePredict for ForestModel {
    /// Hard majority vote; score is the positive vote share.
    fn predict(&self, x: &SparseVector) -> Result<(u8, f64)> {
        check_dim(self.dim, x)?;
        let votes = self.trees.iter().filter(|t| t.label(x) == 1).count();
        let share = votes as f64 / self.trees.len().max(1) as f64;
        Ok((u8::from(share > 0.5), share))
    }
}
