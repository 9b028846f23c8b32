//! Detect whether a peer-review comment points out a problem in the reviewed work.
//!
//! The crate covers the whole workflow: curating multi-rater tag records into a
//! balanced corpus, TF-IDF n-gram features, seven classical classifiers, a small
//! hand-differentiated neural stack (MLP, BiGRU, BiGRU with attention, HAN), and a
//! cross-validation harness that emits JSON/CSV reports and SVG boxplots.

pub mod corpus;
pub mod embeddings;
mod error;
pub mod evaluation;
pub mod linear_models;
pub mod model;
pub mod neural;
pub mod numfmt;
pub mod rng;
pub mod text_features;
pub mod tree_ensembles;

pub use error::{Error, Result};
pub use model::{ClassifierModel, ModelKind, PipelineSpec, Prediction};
