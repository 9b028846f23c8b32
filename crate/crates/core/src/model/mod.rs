//! Pipelines: a model kind with its hyperparameters and feature configuration,
//! fitted into a single serializable classifier.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::Corpus;
use crate::embeddings::{encode_document, encode_sequence, toy_table, EmbeddingTable, PrecomputedVectors};
use crate::linear_models::{self, fit_logreg, fit_mnb, fit_sgd_linear, fit_svm, LinearModel, MnbModel, SgdConfig};
use crate::neural::{
    self, build_network, train_network, ArchitectureKind, EpochRecord, Network, NetworkInput, NetworkSpec, TrainConfig,
};
use crate::rng::{self, purpose};
use crate::text_features::{NgramRange, SparseVector, Vectorizer};
use crate::tree_ensembles::{
    fit_adaboost, fit_gradient_boost, fit_random_forest, AdaBoostModel, EnsemblePredict, ForestConfig, ForestModel,
    GbConfig, GbModel,
};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mnb,
    Logreg,
    Sgd,
    Svm,
    RandomForest,
    Adaboost,
    GradientBoosting,
    MlpPrecomputed,
    Bigru,
    BigruAttention,
    Han,
}

impl ModelKind {
    pub const ALL: [ModelKind; 11] = [
        ModelKind::Mnb,
        ModelKind::Logreg,
        ModelKind::Sgd,
        ModelKind::Svm,
        ModelKind::RandomForest,
        ModelKind::Adaboost,
        ModelKind::GradientBoosting,
        ModelKind::MlpPrecomputed,
        ModelKind::Bigru,
        ModelKind::BigruAttention,
        ModelKind::Han,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mnb => "mnb",
            ModelKind::Logreg => "logreg",
            ModelKind::Sgd => "sgd",
            ModelKind::Svm => "svm",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Adaboost => "adaboost",
            ModelKind::GradientBoosting => "gradient_boosting",
            ModelKind::MlpPrecomputed => "mlp_precomputed",
            ModelKind::Bigru => "bigru",
            ModelKind::BigruAttention => "bigru_attention",
            ModelKind::Han => "han",
        }
    }

    pub fn is_neural(self) -> bool {
        self.architecture().is_some()
    }

    pub fn architecture(self) -> Option<ArchitectureKind> {
        match self {
            ModelKind::MlpPrecomputed => Some(ArchitectureKind::MlpPrecomputed),
            ModelKind::Bigru => Some(ArchitectureKind::Bigru),
            ModelKind::BigruAttention => Some(ArchitectureKind::BigruAttention),
            ModelKind::Han => Some(ArchitectureKind::Han),
            _ => None,
        }
    }

    /// Whether the model reads raw comment text (everything except the MLP
    /// over precomputed vectors).
    pub fn reads_text(self) -> bool {
        self != ModelKind::MlpPrecomputed
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ModelKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!("unknown model kind {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnbParams {
    pub alpha: f64,
}

/// Inverse regularization strength of logistic regression and the SVM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseRegParams {
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdParams {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub epochs: usize,
    pub eta0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

/// Layer sizes, dropout, optimizer settings, and input shaping for the
/// neural kinds. Sizes an architecture does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralParams {
    pub mlp_hidden: Vec<usize>,
    pub recurrent: usize,
    pub attention: usize,
    pub dense: usize,
    pub input_dropout: f64,
    pub head_dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    /// Share of the training items held out for early stopping.
    pub validation_fraction: f64,
    pub max_len: usize,
    pub max_sentences: usize,
}

impl NeuralParams {
    fn defaults(arch: ArchitectureKind) -> Self {
        let spec = match arch {
            ArchitectureKind::MlpPrecomputed => NetworkSpec::mlp_precomputed(0),
            ArchitectureKind::Bigru => NetworkSpec::bigru(1, 0),
            ArchitectureKind::BigruAttention => NetworkSpec::bigru_attention(1, 0),
            ArchitectureKind::Han => NetworkSpec::han(1, 0),
        };
        let train = TrainConfig::default();
        NeuralParams {
            mlp_hidden: spec.mlp_hidden,
            recurrent: spec.recurrent,
            attention: spec.attention,
            dense: spec.dense,
            input_dropout: spec.input_dropout,
            head_dropout: spec.head_dropout,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            learning_rate: train.learning_rate,
            patience: train.patience,
            validation_fraction: 0.1,
            max_len: crate::embeddings::DEFAULT_MAX_LEN,
            max_sentences: crate::embeddings::DEFAULT_MAX_SENTENCES,
        }
    }

    fn network_spec(&self, arch: ArchitectureKind, input_dim: usize, seed: u64) -> NetworkSpec {
        let base = match arch {
            ArchitectureKind::MlpPrecomputed => NetworkSpec::mlp_precomputed(seed),
            ArchitectureKind::Bigru => NetworkSpec::bigru(input_dim, seed),
            ArchitectureKind::BigruAttention => NetworkSpec::bigru_attention(input_dim, seed),
            ArchitectureKind::Han => NetworkSpec::han(input_dim, seed),
        };
        NetworkSpec {
            mlp_hidden: self.mlp_hidden.clone(),
            recurrent: self.recurrent,
            attention: self.attention,
            dense: self.dense,
            input_dropout: self.input_dropout,
            head_dropout: self.head_dropout,
            ..base
        }
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            learning_rate: self.learning_rate,
            patience: self.patience,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Hyperparameters {
    Mnb(MnbParams),
    InverseReg(InverseRegParams),
    Sgd(SgdParams),
    Forest(ForestParams),
    AdaBoost(AdaBoostParams),
    GradientBoosting(GbParams),
    Neural(NeuralParams),
}

impl Hyperparameters {
    /// The documented defaults for `kind`.
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Mnb => Hyperparameters::Mnb(MnbParams { alpha: 1.0 }),
            ModelKind::Logreg => Hyperparameters::InverseReg(InverseRegParams { c: 10.0 }),
            ModelKind::Svm => Hyperparameters::InverseReg(InverseRegParams { c: 1.0 }),
            ModelKind::Sgd => {
                let d = SgdConfig::default();
                Hyperparameters::Sgd(SgdParams { alpha: d.alpha, l1_ratio: d.l1_ratio, epochs: d.epochs, eta0: d.eta0 })
            }
            ModelKind::RandomForest => {
                let d = ForestConfig::default();
                Hyperparameters::Forest(ForestParams {
                    n_trees: d.n_trees,
                    max_depth: d.max_depth,
                    max_features: d.max_features,
                    bootstrap: d.bootstrap,
                })
            }
            ModelKind::Adaboost => Hyperparameters::AdaBoost(AdaBoostParams { n_estimators: 170, learning_rate: 0.8 }),
            ModelKind::GradientBoosting => {
                let d = GbConfig::default();
                Hyperparameters::GradientBoosting(GbParams {
                    n_estimators: d.n_estimators,
                    learning_rate: d.learning_rate,
                    max_depth: d.max_depth,
                })
            }
            k => Hyperparameters::Neural(NeuralParams::defaults(k.architecture().expect("neural kind"))),
        }
    }

    /// Parses the hyperparameter object belonging to `kind`.
    pub fn from_value(kind: ModelKind, value: serde_json::Value) -> Result<Self> {
        Ok(match kind {
            ModelKind::Mnb => Hyperparameters::Mnb(serde_json::from_value(value)?),
            ModelKind::Logreg | ModelKind::Svm => Hyperparameters::InverseReg(serde_json::from_value(value)?),
            ModelKind::Sgd => Hyperparameters::Sgd(serde_json::from_value(value)?),
            ModelKind::RandomForest => Hyperparameters::Forest(serde_json::from_value(value)?),
            ModelKind::Adaboost => Hyperparameters::AdaBoost(serde_json::from_value(value)?),
            ModelKind::GradientBoosting => Hyperparameters::GradientBoosting(serde_json::from_value(value)?),
            _ => Hyperparameters::Neural(serde_json::from_value(value)?),
        })
    }

    fn matches(&self, kind: ModelKind) -> bool {
        matches!(
            (self, kind),
            (Hyperparameters::Mnb(_), ModelKind::Mnb)
                | (Hyperparameters::InverseReg(_), ModelKind::Logreg | ModelKind::Svm)
                | (Hyperparameters::Sgd(_), ModelKind::Sgd)
                | (Hyperparameters::Forest(_), ModelKind::RandomForest)
                | (Hyperparameters::AdaBoost(_), ModelKind::Adaboost)
                | (Hyperparameters::GradientBoosting(_), ModelKind::GradientBoosting)
                | (
                    Hyperparameters::Neural(_),
                    ModelKind::MlpPrecomputed | ModelKind::Bigru | ModelKind::BigruAttention | ModelKind::Han
                )
        )
    }
}

/// Where a neural pipeline gets its input vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum EmbeddingSource {
    /// Seeded random vectors of the given dimension for every training token.
    Toy { dim: usize },
    /// A pretrained word-vector table supplied at fit time.
    Pretrained,
    /// Externally computed 768-d vectors keyed by comment id.
    Precomputed,
}

mod ngram_pair {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::text_features::NgramRange;

    pub fn serialize<S: Serializer>(r: &Option<NgramRange>, s: S) -> Result<S::Ok, S::Error> {
        r.map(|r| (r.low, r.high)).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NgramRange>, D::Error> {
        Option::<(usize, usize)>::deserialize(d)?
            .map(|(lo, hi)| NgramRange::new(lo, hi).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(with = "ngram_pair", default, skip_serializing_if = "Option::is_none")]
    pub ngram_range: Option<NgramRange>,
    pub tfidf: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<EmbeddingSource>,
}

impl FeatureConfig {
    pub fn tfidf(range: NgramRange) -> Self {
        FeatureConfig { ngram_range: Some(range), tfidf: true, embeddings: None }
    }

    pub fn embeddings(source: EmbeddingSource) -> Self {
        FeatureConfig { ngram_range: None, tfidf: false, embeddings: Some(source) }
    }
}

/// Model kind + hyperparameters + feature configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSpec {
    pub model: ModelKind,
    pub hyperparameters: Hyperparameters,
    pub features: FeatureConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    model: ModelKind,
    hyperparameters: serde_json::Value,
    features: FeatureConfig,
}

impl<'de> Deserialize<'de> for PipelineSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawPipeline::deserialize(d)?;
        let hyperparameters =
            Hyperparameters::from_value(raw.model, raw.hyperparameters).map_err(serde::de::Error::custom)?;
        let spec = PipelineSpec { model: raw.model, hyperparameters, features: raw.features };
        spec.validate().map_err(serde::de::Error::custom)?;
        Ok(spec)
    }
}

/// Default dimension of the seeded toy word vectors.
pub const TOY_EMBEDDING_DIM: usize = 8;

impl PipelineSpec {
    /// Documented defaults: bigram TF-IDF for every classical model except the
    /// random forest (unigrams); toy embeddings for the recurrent models.
    pub fn defaults(kind: ModelKind) -> Self {
        let features = match kind {
            ModelKind::RandomForest => FeatureConfig::tfidf(NgramRange::UNIGRAMS),
            ModelKind::MlpPrecomputed => FeatureConfig::embeddings(EmbeddingSource::Precomputed),
            ModelKind::Bigru | ModelKind::BigruAttention | ModelKind::Han => {
                FeatureConfig::embeddings(EmbeddingSource::Toy { dim: TOY_EMBEDDING_DIM })
            }
            _ => FeatureConfig::tfidf(NgramRange::BIGRAMS),
        };
        PipelineSpec { model: kind, hyperparameters: Hyperparameters::defaults(kind), features }
    }

    /// Replaces the n-gram range of a TF-IDF pipeline.
    pub fn with_ngram(mut self, range: NgramRange) -> Result<Self> {
        if !self.features.tfidf {
            return Err(Error::invalid(format!("{} does not use n-gram features", self.model)));
        }
        self.features.ngram_range = Some(range);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.hyperparameters.matches(self.model) {
            return Err(Error::invalid(format!("hyperparameters do not belong to {}", self.model)));
        }
        let f = &self.features;
        match self.model.architecture() {
            None => {
                if !f.tfidf || f.ngram_range.is_none() || f.embeddings.is_some() {
                    return Err(Error::invalid(format!("{} needs TF-IDF n-gram features", self.model)));
                }
            }
            Some(ArchitectureKind::MlpPrecomputed) => {
                if f.embeddings != Some(EmbeddingSource::Precomputed) {
                    return Err(Error::invalid("mlp_precomputed reads precomputed vectors"));
                }
            }
            Some(_) => {
                if !matches!(f.embeddings, Some(EmbeddingSource::Toy { dim }) if dim > 0)
                    && f.embeddings != Some(EmbeddingSource::Pretrained)
                {
                    return Err(Error::invalid(format!("{} reads word vectors", self.model)));
                }
            }
        }
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive, got {v}")))
            }
        };
        match &self.hyperparameters {
            Hyperparameters::Mnb(p) => positive(p.alpha, "alpha")?,
            Hyperparameters::InverseReg(p) => positive(p.c, "C")?,
            Hyperparameters::Sgd(p) => {
                positive(p.alpha, "alpha")?;
                positive(p.eta0, "eta0")?;
                if !(0.0..=1.0).contains(&p.l1_ratio) {
                    return Err(Error::invalid(format!("l1_ratio must lie in [0, 1], got {}", p.l1_ratio)));
                }
            }
            Hyperparameters::Forest(p) => {
                if p.n_trees == 0 || p.max_features == Some(0) {
                    return Err(Error::invalid("forest needs at least one tree and one feature per split"));
                }
            }
            Hyperparameters::AdaBoost(p) => positive(p.learning_rate, "learning rate")?,
            Hyperparameters::GradientBoosting(p) => positive(p.learning_rate, "learning rate")?,
            Hyperparameters::Neural(p) => {
                positive(p.learning_rate, "learning rate")?;
                if !(p.validation_fraction > 0.0 && p.validation_fraction < 1.0) {
                    return Err(Error::invalid("validation_fraction must lie in (0, 1)"));
                }
                if p.max_len == 0 || p.max_sentences == 0 {
                    return Err(Error::invalid("max_len and max_sentences must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Inputs some pipelines need besides the corpus.
#[derive(Debug, Clone, Copy, Default)]
pub struct Resources<'a> {
    pub embeddings: Option<&'a EmbeddingTable>,
    pub precomputed: Option<&'a PrecomputedVectors>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Mnb(MnbModel),
    Linear(LinearModel),
    Forest(ForestModel),
    AdaBoost(AdaBoostModel),
    GradientBoosting(GbModel),
}

impl Estimator {
    fn predict(&self, x: &SparseVector) -> Result<(u8, f64)> {
        match self {
            Estimator::Mnb(m) => m.predict(x),
            Estimator::Linear(m) => {
                let p = m.predict(x)?;
                Ok((p.label, p.probability.unwrap_or(p.score)))
            }
            Estimator::Forest(m) => m.predict(x),
            Estimator::AdaBoost(m) => m.predict(x),
            Estimator::GradientBoosting(m) => m.predict(x),
        }
    }

    fn to_value(&self) -> Result<serde_json::Value> {
        Ok(match self {
            Estimator::Mnb(m) => serde_json::to_value(m)?,
            Estimator::Linear(m) => serde_json::to_value(m)?,
            Estimator::Forest(m) => serde_json::to_value(m)?,
            Estimator::AdaBoost(m) => serde_json::to_value(m)?,
            Estimator::GradientBoosting(m) => serde_json::to_value(m)?,
        })
    }

    fn from_value(kind: ModelKind, v: serde_json::Value) -> Result<Self> {
        Ok(match kind {
            ModelKind::Mnb => Estimator::Mnb(serde_json::from_value(v)?),
            ModelKind::Logreg | ModelKind::Sgd | ModelKind::Svm => Estimator::Linear(serde_json::from_value(v)?),
            ModelKind::RandomForest => Estimator::Forest(serde_json::from_value(v)?),
            ModelKind::Adaboost => Estimator::AdaBoost(serde_json::from_value(v)?),
            ModelKind::GradientBoosting => Estimator::GradientBoosting(serde_json::from_value(v)?),
            k => return Err(Error::invalid(format!("{k} has no classical estimator"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Tfidf { vectorizer: Vectorizer, estimator: Estimator },
    /// Recurrent models carry the word vectors they were trained with.
    Sequence { embeddings: EmbeddingTable, network: Network },
    Precomputed { network: Network },
}

/// A fitted pipeline: everything needed to score a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub pipeline: PipelineSpec,
    pub seed: u64,
    pub fitted: FittedModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: u8,
    pub score: f64,
}

fn check_labels(labels: &[u8]) -> Result<()> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Seeded, class-stratified hold-out: `round(fraction · n_c)` items of each
/// class (at least one) go to validation.
pub fn validation_split(labels: &[u8], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = rng::stream(seed, purpose::VALIDATION);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let take = ((members.len() as f64 * fraction).round() as usize).max(1);
        if take >= members.len() {
            return Err(Error::invalid(format!("too few items of class {class} to hold out a validation set")));
        }
        val.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn sequence_input(arch: ArchitectureKind, text: &str, table: &EmbeddingTable, p: &NeuralParams) -> Result<NetworkInput> {
    Ok(match arch {
        ArchitectureKind::Han => NetworkInput::Document(encode_document(text, table, p.max_len, p.max_sentences)?),
        _ => NetworkInput::Sequence(encode_sequence(text, table, p.max_len)?),
    })
}

fn precomputed_input(vectors: &PrecomputedVectors, id: &str) -> Result<NetworkInput> {
    vectors
        .get(id)
        .map(|v| NetworkInput::Vector(v.to_vec()))
        .ok_or_else(|| Error::invalid(format!("no precomputed vector for id {id:?}")))
}

/// Fits `spec` on `train` only.
pub fn fit_pipeline(spec: &PipelineSpec, train: &Corpus, seed: u64, resources: Resources<'_>) -> Result<ClassifierModel> {
    fit_pipeline_with_history(spec, train, seed, resources).map(|(model, _)| model)
}

/// Like [`fit_pipeline`], also returning the per-epoch training history of
/// neural kinds (empty for classical kinds).
pub fn fit_pipeline_with_history(
    spec: &PipelineSpec,
    train: &Corpus,
    seed: u64,
    resources: Resources<'_>,
) -> Result<(ClassifierModel, Vec<EpochRecord>)> {
    spec.validate()?;
    let mut history = Vec::new();
    let labels = train.labels();
    check_labels(&labels)?;
    let texts: Vec<&str> = train.items.iter().map(|c| c.text.as_str()).collect();
    let fitted = match (&spec.hyperparameters, spec.model.architecture()) {
        (Hyperparameters::Neural(p), Some(arch)) => {
            let (train_idx, val_idx) = validation_split(&labels, p.validation_fraction, seed)?;
            let (inputs, embeddings) = if arch == ArchitectureKind::MlpPrecomputed {
                let vectors = resources
                    .precomputed
                    .ok_or_else(|| Error::invalid("mlp_precomputed needs precomputed vectors"))?;
                let inputs =
                    train.items.iter().map(|c| precomputed_input(vectors, &c.id)).collect::<Result<Vec<_>>>()?;
                (inputs, None)
            } else {
                let table = match spec.features.embeddings {
                    Some(EmbeddingSource::Toy { dim }) => toy_table(&texts, dim, seed)?,
                    _ => {
                        let full = resources
                            .embeddings
                            .ok_or_else(|| Error::invalid(format!("{} needs a word-vector table", spec.model)))?;
                        let vocab: std::collections::BTreeSet<String> =
                            texts.iter().flat_map(|t| crate::text_features::tokenize(t)).collect();
                        let table = full.restrict(vocab.iter().map(String::as_str));
                        if table.is_empty() {
                            return Err(Error::invalid("no training token has a word vector"));
                        }
                        table
                    }
                };
                let inputs =
                    texts.iter().map(|t| sequence_input(arch, t, &table, p)).collect::<Result<Vec<_>>>()?;
                (inputs, Some(table))
            };
            let input_dim = match (&embeddings, &inputs[0]) {
                (Some(t), _) => t.dim()?,
                (None, NetworkInput::Vector(v)) => v.len(),
                _ => unreachable!("precomputed inputs are vectors"),
            };
            let pick = |idx: &[usize]| -> Vec<neural::Sample> {
                idx.iter().map(|&i| (inputs[i].clone(), labels[i])).collect()
            };
            let net = build_network(&p.network_spec(arch, input_dim, seed))?;
            let (network, epochs) = train_network(net, &pick(&train_idx), &pick(&val_idx), &p.train_config(seed))?;
            history = epochs;
            match embeddings {
                Some(embeddings) => FittedModel::Sequence { embeddings, network },
                None => FittedModel::Precomputed { network },
            }
        }
        (hp, None) => {
            let range = spec.features.ngram_range.expect("validated");
            let vectorizer = Vectorizer::fit(&texts, range)?;
            let x = vectorizer.transform_all(&texts);
            let estimator = match hp {
                Hyperparameters::Mnb(p) => Estimator::Mnb(fit_mnb(&x, &labels, p.alpha)?),
                Hyperparameters::InverseReg(p) if spec.model == ModelKind::Logreg => {
                    Estimator::Linear(fit_logreg(&x, &labels, p.c)?)
                }
                Hyperparameters::InverseReg(p) => Estimator::Linear(fit_svm(&x, &labels, p.c)?),
                Hyperparameters::Sgd(p) => Estimator::Linear(fit_sgd_linear(
                    &x,
                    &labels,
                    &SgdConfig { alpha: p.alpha, l1_ratio: p.l1_ratio, epochs: p.epochs, eta0: p.eta0, seed },
                )?),
                Hyperparameters::Forest(p) => Estimator::Forest(fit_random_forest(
                    &x,
                    &labels,
                    &ForestConfig {
                        n_trees: p.n_trees,
                        max_depth: p.max_depth,
                        max_features: p.max_features,
                        bootstrap: p.bootstrap,
                        seed,
                    },
                )?),
                Hyperparameters::AdaBoost(p) => {
                    Estimator::AdaBoost(fit_adaboost(&x, &labels, p.n_estimators, p.learning_rate)?.0)
                }
                Hyperparameters::GradientBoosting(p) => Estimator::GradientBoosting(fit_gradient_boost(
                    &x,
                    &labels,
                    &GbConfig { n_estimators: p.n_estimators, learning_rate: p.learning_rate, max_depth: p.max_depth },
                )?),
                Hyperparameters::Neural(_) => unreachable!("validated"),
            };
            FittedModel::Tfidf { vectorizer, estimator }
        }
        _ => unreachable!("validated"),
    };
    Ok((ClassifierModel { pipeline: spec.clone(), seed, fitted }, history))
}

impl ClassifierModel {
    pub fn kind(&self) -> ModelKind {
        self.pipeline.model
    }

    pub fn vectorizer(&self) -> Option<&Vectorizer> {
        match &self.fitted {
            FittedModel::Tfidf { vectorizer, .. } => Some(vectorizer),
            _ => None,
        }
    }

    /// The linear weights, for kinds that have them.
    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.fitted {
            FittedModel::Tfidf { estimator: Estimator::Linear(m), .. } => Some(m),
            _ => None,
        }
    }

    fn neural_params(&self) -> &NeuralParams {
        match &self.pipeline.hyperparameters {
            Hyperparameters::Neural(p) => p,
            _ => unreachable!("neural models carry neural hyperparameters"),
        }
    }

    /// Scores raw comment text. Errors for models over precomputed vectors.
    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        let (label, score) = match &self.fitted {
            FittedModel::Tfidf { vectorizer, estimator } => estimator.predict(&vectorizer.transform(text))?,
            FittedModel::Sequence { embeddings, network } => {
                let arch = self.kind().architecture().expect("neural kind");
                network.predict(&sequence_input(arch, text, embeddings, self.neural_params())?)?
            }
            FittedModel::Precomputed { .. } => {
                return Err(Error::Unsupported(format!("{} scores precomputed vectors, not text", self.kind())))
            }
        };
        Ok(Prediction { label, score })
    }

    /// Scores a precomputed 768-d vector.
    pub fn predict_vector(&self, vector: &[f64]) -> Result<Prediction> {
        match &self.fitted {
            FittedModel::Precomputed { network } => {
                let (label, score) = network.predict(&NetworkInput::Vector(vector.to_vec()))?;
                Ok(Prediction { label, score })
            }
            _ => Err(Error::Unsupported(format!("{} scores text, not vectors", self.kind()))),
        }
    }

    /// Scores a corpus item, looking up its precomputed vector when needed.
    pub fn predict_item(&self, id: &str, text: &str, resources: Resources<'_>) -> Result<Prediction> {
        match &self.fitted {
            FittedModel::Precomputed { .. } => {
                let vectors = resources
                    .precomputed
                    .ok_or_else(|| Error::invalid("mlp_precomputed needs precomputed vectors"))?;
                let v = vectors.get(id).ok_or_else(|| Error::invalid(format!("no precomputed vector for id {id:?}")))?;
                self.predict_vector(v)
            }
            _ => self.predict_text(text),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    kind: ModelKind,
    hyperparameters: serde_json::Value,
    features: FeatureConfig,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vectorizer: Option<Vectorizer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    estimator: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embeddings: Option<EmbeddingTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    network: Option<Network>,
}

impl Serialize for ClassifierModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let mut file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            kind: self.pipeline.model,
            hyperparameters: serde_json::to_value(&self.pipeline.hyperparameters).map_err(S::Error::custom)?,
            features: self.pipeline.features,
            seed: self.seed,
            vectorizer: None,
            estimator: None,
            embeddings: None,
            network: None,
        };
        match &self.fitted {
            FittedModel::Tfidf { vectorizer, estimator } => {
                file.vectorizer = Some(vectorizer.clone());
                file.estimator = Some(estimator.to_value().map_err(S::Error::custom)?);
            }
            FittedModel::Sequence { embeddings, network } => {
                file.embeddings = Some(embeddings.clone());
                file.network = Some(network.clone());
            }
            FittedModel::Precomputed { network } => file.network = Some(network.clone()),
        }
        file.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClassifierModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = ModelFile::deserialize(d)?;
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(D::Error::custom(format!("unsupported format_version {}", f.format_version)));
        }
        let hyperparameters = Hyperparameters::from_value(f.kind, f.hyperparameters).map_err(D::Error::custom)?;
        let pipeline = PipelineSpec { model: f.kind, hyperparameters, features: f.features };
        pipeline.validate().map_err(D::Error::custom)?;
        let fitted = match (f.kind.architecture(), f.vectorizer, f.estimator, f.embeddings, f.network) {
            (None, Some(vectorizer), Some(est), None, None) => FittedModel::Tfidf {
                vectorizer,
                estimator: Estimator::from_value(f.kind, est).map_err(D::Error::custom)?,
            },
            (Some(ArchitectureKind::MlpPrecomputed), None, None, None, Some(network)) => {
                FittedModel::Precomputed { network }
            }
            (Some(_), None, None, Some(embeddings), Some(network)) => FittedModel::Sequence { embeddings, network },
            _ => return Err(D::Error::custom(format!("model file sections do not match kind {}", f.kind))),
        };
        if let FittedModel::Sequence { network, .. } | FittedModel::Precomputed { network } = &fitted {
            if Some(network.spec().kind) != f.kind.architecture() {
                return Err(D::Error::custom("network architecture does not match kind"));
            }
        }
        Ok(ClassifierModel { pipeline, seed: f.seed, fitted })
    }
}

/// Top-weighted terms of a fitted linear pipeline.
pub fn inspect_coefficients(model: &ClassifierModel, k: usize) -> Result<linear_models::CoefficientReport> {
    match (&model.fitted, model.linear()) {
        (FittedModel::Tfidf { vectorizer, .. }, Some(lin)) => {
            linear_models::top_coefficients(lin, &vectorizer.vocabulary, k)
        }
        _ => Err(Error::Unsupported(format!("{} has no per-term coefficients", model.kind()))),
    }
}
