use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::layers::Mode;
use super::network::{Network, NetworkInput};
use crate::evaluation::compute_metrics;
use crate::rng::{self, purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 32, max_epochs: 30, learning_rate: 1e-3, patience: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_f1: f64,
}

pub type Sample = (NetworkInput, u8);

/// Mean loss of the batch (no dropout) and its gradient in `grads`.
pub fn batch_loss_and_grad(net: &Network, batch: &[&Sample], grads: &mut Network) -> Result<f64> {
    grads.visit_mut(&mut |_, d| d.fill(0.0));
    let mut total = 0.0;
    for (input, y) in batch {
        total += net.run(input, Some(*y), Mode::Eval, None, Some(grads))?.loss.expect("label given");
    }
    let n = batch.len() as f64;
    grads.visit_mut(&mut |_, d| d.iter_mut().for_each(|g| *g /= n));
    Ok(total / n)
}

/// Mean of per-sample losses, no dropout.
pub fn batch_loss(net: &Network, batch: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for (input, y) in batch {
        total += net.loss(input, *y)?;
    }
    Ok(total / batch.len() as f64)
}

/// Predictions for many inputs; identical to calling [`Network::predict`] per item.
pub fn predict_batch(net: &Network, inputs: &[NetworkInput]) -> Result<Vec<(u8, f64)>> {
    inputs.par_iter().map(|x| net.predict(x)).collect()
}

/// Minibatch Adam with early stopping on validation f1. Returns the parameters
/// of the best validation epoch and the per-epoch history.
pub fn train_network(
    mut net: Network,
    train: &[Sample],
    validation: &[Sample],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<EpochRecord>)> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::invalid("batch size and epoch count must be positive"));
    }
    let mut rng = rng::stream(cfg.seed, purpose::TRAIN);
    let mut grads = net.zeros_like();
    let mut adam = AdamState::new(net.parameter_count());
    let mut params = net.flat_parameters();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let val_inputs: Vec<NetworkInput> = validation.iter().map(|(x, _)| x.clone()).collect();
    let val_gold: Vec<u8> = validation.iter().map(|(_, y)| *y).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;
    let mut history = Vec::new();
    for _ in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.visit_mut(&mut |_, d| d.fill(0.0));
            for &i in batch {
                let (input, y) = &train[i];
                let mut drop_rng = rng::seeded(rng.gen());
                let out = net.run(input, Some(*y), Mode::Train, Some(&mut drop_rng), Some(&mut grads))?;
                epoch_loss += out.loss.expect("label given");
            }
            let scale = 1.0 / batch.len() as f64;
            let mut flat = grads.flat_parameters();
            flat.iter_mut().for_each(|g| *g *= scale);
            adam_step(&mut params, &flat, &mut adam, cfg.learning_rate)?;
            net.set_flat_parameters(&params)?;
        }
        let predicted: Vec<u8> = predict_batch(&net, &val_inputs)?.into_iter().map(|(l, _)| l).collect();
        let val_f1 = compute_metrics(&predicted, &val_gold)?.f1;
        history.push(EpochRecord { train_loss: epoch_loss / train.len() as f64, val_f1 });
        if best.as_ref().map_or(true, |(f, _)| val_f1 > *f) {
            best = Some((val_f1, params.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience {
            break;
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    net.set_flat_parameters(&best_params)?;
    Ok((net, history))
}
