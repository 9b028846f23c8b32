use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use crate::corpus::{Corpus, FoldPlan};
use crate::model::{fit_pipeline, ClassifierModel, PipelineSpec, Resources};
use crate::{Error, Result};

/// Per-fold scores of one pipeline, in fold order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldScores {
    pub f1: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl FoldScores {
    pub fn from_metrics(metrics: &[Metrics]) -> Self {
        FoldScores {
            f1: metrics.iter().map(|m| m.f1).collect(),
            precision: metrics.iter().map(|m| m.precision).collect(),
            recall: metrics.iter().map(|m| m.recall).collect(),
            accuracy: metrics.iter().map(|m| m.accuracy).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }
}

/// Training and held-out portions for fold `fold`.
pub fn fold_partition(corpus: &Corpus, plan: &FoldPlan, fold: usize) -> Result<(Corpus, Corpus)> {
    let held = plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::invalid(format!("fold {fold} out of range (k = {})", plan.k)))?;
    let test_pos = corpus.positions_of(held)?;
    let mut in_test = vec![false; corpus.len()];
    for &p in &test_pos {
        in_test[p] = true;
    }
    let train_pos: Vec<usize> = (0..corpus.len()).filter(|&p| !in_test[p]).collect();
    Ok((corpus.select(&train_pos), corpus.select(&test_pos)))
}

/// Fits `spec` on every fold's training portion and applies `f` to the model
/// and its held-out portion. Folds run concurrently; results come back in
/// fold order.
pub fn cross_validate_map<T, F>(
    spec: &PipelineSpec,
    corpus: &Corpus,
    plan: &FoldPlan,
    seed: u64,
    resources: Resources<'_>,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &ClassifierModel, &Corpus) -> Result<T> + Sync,
{
    spec.validate()?;
    if plan.folds.len() != plan.k || plan.k < 2 {
        return Err(Error::invalid(format!("fold plan declares k = {} but has {} folds", plan.k, plan.folds.len())));
    }
    (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let (train, test) = fold_partition(corpus, plan, fold)?;
            let (neg, pos) = train.class_counts();
            if neg == 0 || pos == 0 {
                return Err(Error::invalid(format!("fold {fold}: training portion contains a single class")));
            }
            if test.is_empty() {
                return Err(Error::invalid(format!("fold {fold} is empty")));
            }
            let model = fit_pipeline(spec, &train, seed, resources)
                .map_err(|e| Error::invalid(format!("fold {fold}: {e}")))?;
            f(fold, &model, &test)
        })
        .collect()
}

/// Scores of the held-out items of a corpus under `model`.
pub fn evaluate_model(model: &ClassifierModel, test: &Corpus, resources: Resources<'_>) -> Result<Metrics> {
    let predicted = test
        .items
        .iter()
        .map(|c| model.predict_item(&c.id, &c.text, resources).map(|p| p.label))
        .collect::<Result<Vec<u8>>>()?;
    compute_metrics(&predicted, &test.labels())
}

/// k-fold scores: vocabulary, idf, and model are refit on each training portion.
pub fn cross_validate(
    spec: &PipelineSpec,
    corpus: &Corpus,
    plan: &FoldPlan,
    seed: u64,
    resources: Resources<'_>,
) -> Result<FoldScores> {
    let metrics = cross_validate_map(spec, corpus, plan, seed, resources, |_, model, test| {
        evaluate_model(model, test, resources)
    })?;
    Ok(FoldScores::from_metrics(&metrics))
}
