use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{signed_targets, LinearModel, LossKind, Regularization};
use crate::rng::{self, purpose};
use crate::text_features::SparseVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub epochs: usize,
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            alpha: 0.001,
            l1_ratio: 0.15,
            epochs: 20,
            eta0: 0.1,
            seed: 0,
        }
    }
}

/// `(1/n) Σ max(0, 1 − y_i(w·x_i + b)) + α(ρ‖w‖₁ + (1−ρ)·½‖w‖²)`.
pub fn sgd_objective(x: &[SparseVector], y: &[u8], cfg: &SgdConfig, w: &[f64], b: f64) -> f64 {
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &l)| {
            let t = if l == 1 { 1.0 } else { -1.0 };
            (1.0 - t * (row.dot_dense(w) + b)).max(0.0)
        })
        .sum::<f64>()
        / x.len() as f64;
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    hinge + cfg.alpha * (cfg.l1_ratio * l1 + (1.0 - cfg.l1_ratio) * l2)
}

/// Shuffled per-sample subgradient descent with step `η₀ / (1 + η₀ α t)`.
/// The subgradient of `|w|` at zero is taken as zero.
pub fn fit_sgd_linear(x: &[SparseVector], y: &[u8], cfg: &SgdConfig) -> Result<LinearModel> {
    if !(cfg.alpha > 0.0) || !(0.0..=1.0).contains(&cfg.l1_ratio) || !(cfg.eta0 > 0.0) {
        return Err(Error::invalid(format!("invalid SGD configuration {cfg:?}")));
    }
    let targets = signed_targets(x, y)?;
    let dim = x[0].dim();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut rng = rng::stream(cfg.seed, purpose::SGD);
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = cfg.eta0 / (1.0 + cfg.eta0 * cfg.alpha * t as f64);
            let margin = targets[i] * (x[i].dot_dense(&w) + b);
            let shrink = 1.0 - eta * cfg.alpha * (1.0 - cfg.l1_ratio);
            let l1_step = eta * cfg.alpha * cfg.l1_ratio;
            for v in w.iter_mut() {
                let sign = if *v > 0.0 {
                    1.0
                } else if *v < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *v = *v * shrink - l1_step * sign;
            }
            if margin < 1.0 {
                for (j, v) in x[i].iter() {
                    w[j] += eta * targets[i] * v;
                }
                b += eta * targets[i];
            }
            t += 1;
        }
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        loss: LossKind::Hinge,
        regularization: Regularization::ElasticNet {
            alpha: cfg.alpha,
            l1_ratio: cfg.l1_ratio,
        },
    })
}
