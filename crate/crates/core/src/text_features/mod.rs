//! Tokenization, n-gram vocabularies, and TF-IDF weighting.

mod sparse;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use sparse::{CscMatrix, SparseVector};

/// Lower-cased maximal alphanumeric runs of at least two characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_lowercase)
        .collect()
}

/// Inclusive n-gram length range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramRange {
    pub low: usize,
    pub high: usize,
}

impl NgramRange {
    pub const UNIGRAMS: NgramRange = NgramRange { low: 1, high: 1 };
    /// Unigrams plus bigrams.
    pub const BIGRAMS: NgramRange = NgramRange { low: 1, high: 2 };

    pub fn new(low: usize, high: usize) -> Result<Self> {
        if low == 0 || low > high {
            return Err(Error::invalid(format!("invalid n-gram range ({low}, {high})")));
        }
        Ok(NgramRange { low, high })
    }
}

/// All contiguous n-grams for n in the range, grouped by n, each group in
/// document order.
pub fn extract_ngrams(tokens: &[String], range: NgramRange) -> Vec<String> {
    let mut out = Vec::new();
    for n in range.low..=range.high {
        if n > tokens.len() {
            break;
        }
        out.extend(tokens.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Term → column map with lexicographically ordered columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    ngram_range: NgramRange,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>, ngram_range: NgramRange) -> Result<Self> {
        let index: HashMap<String, usize> =
            terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != terms.len() {
            return Err(Error::invalid("vocabulary terms are not unique"));
        }
        Ok(Vocabulary {
            terms,
            index,
            ngram_range,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn ngram_range(&self) -> NgramRange {
        self.ngram_range
    }
}

pub fn fit_vocabulary(docs: &[Vec<String>], range: NgramRange) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::invalid("cannot fit a vocabulary on zero documents"));
    }
    let terms: BTreeSet<String> = docs.iter().flat_map(|d| extract_ngrams(d, range)).collect();
    if terms.is_empty() {
        return Err(Error::invalid("empty vocabulary: no tokens in any document"));
    }
    Vocabulary::from_terms(terms.into_iter().collect(), range)
}

/// Occurrence counts of in-vocabulary n-grams.
pub fn vectorize_counts(doc: &[String], vocab: &Vocabulary) -> SparseVector {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for term in extract_ngrams(doc, vocab.ngram_range) {
        if let Some(i) = vocab.index_of(&term) {
            *counts.entry(i).or_default() += 1.0;
        }
    }
    SparseVector::from_pairs(vocab.len(), counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    #[serde(with = "crate::numfmt::vec")]
    pub idf: Vec<f64>,
    pub document_count: usize,
}

/// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`.
pub fn fit_idf(counts: &[SparseVector], n: usize) -> Result<TfidfModel> {
    if n == 0 {
        return Err(Error::invalid("idf needs at least one document"));
    }
    let dim = counts.first().map_or(0, SparseVector::dim);
    let mut df = vec![0usize; dim];
    for row in counts {
        if row.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.dim(),
            });
        }
        for (i, v) in row.iter() {
            if v != 0.0 {
                df[i] += 1;
            }
        }
    }
    Ok(TfidfModel::from_df(&df, n))
}

impl TfidfModel {
    pub fn from_df(df: &[usize], n: usize) -> Self {
        let idf = df
            .iter()
            .map(|&d| ((1 + n) as f64 / (1 + d) as f64).ln() + 1.0)
            .collect();
        TfidfModel {
            idf,
            document_count: n,
        }
    }
}

/// Scale counts by idf, then L2-normalize. The zero vector maps to itself.
pub fn transform_tfidf(counts: &SparseVector, model: &TfidfModel) -> Result<SparseVector> {
    if counts.dim() != model.idf.len() {
        return Err(Error::DimensionMismatch {
            expected: model.idf.len(),
            got: counts.dim(),
        });
    }
    let weighted = counts.map_values(|i, c| c * model.idf[i]);
    let norm = weighted.norm();
    if norm == 0.0 {
        return Ok(weighted);
    }
    Ok(weighted.map_values(|_, v| v / norm))
}

/// Vocabulary plus idf weights: the fitted text-to-feature map of a pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Vectorizer {
    pub vocabulary: Vocabulary,
    pub tfidf: TfidfModel,
}

/// On-disk form: `{terms, idf, ngram_range}`.
#[derive(Serialize, Deserialize)]
struct VectorizerFile {
    terms: Vec<String>,
    #[serde(with = "crate::numfmt::vec")]
    idf: Vec<f64>,
    ngram_range: (usize, usize),
    document_count: usize,
}

impl Serialize for Vectorizer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = self.vocabulary.ngram_range;
        VectorizerFile {
            terms: self.vocabulary.terms.clone(),
            idf: self.tfidf.idf.clone(),
            ngram_range: (r.low, r.high),
            document_count: self.tfidf.document_count,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vectorizer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = VectorizerFile::deserialize(d)?;
        if f.terms.len() != f.idf.len() {
            return Err(D::Error::custom("terms and idf differ in length"));
        }
        let range = NgramRange::new(f.ngram_range.0, f.ngram_range.1).map_err(D::Error::custom)?;
        let vocabulary = Vocabulary::from_terms(f.terms, range).map_err(D::Error::custom)?;
        Ok(Vectorizer {
            vocabulary,
            tfidf: TfidfModel {
                idf: f.idf,
                document_count: f.document_count,
            },
        })
    }
}

impl Vectorizer {
    /// Fit vocabulary and idf on `texts` only.
    pub fn fit<S: AsRef<str>>(texts: &[S], range: NgramRange) -> Result<Self> {
        let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        let vocabulary = fit_vocabulary(&docs, range)?;
        let counts: Vec<SparseVector> = docs.iter().map(|d| vectorize_counts(d, &vocabulary)).collect();
        let tfidf = fit_idf(&counts, docs.len())?;
        Ok(Vectorizer { vocabulary, tfidf })
    }

    pub fn counts(&self, text: &str) -> SparseVector {
        vectorize_counts(&tokenize(text), &self.vocabulary)
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        transform_tfidf(&self.counts(text), &self.tfidf)
            .expect("vocabulary and idf are fitted together")
    }

    pub fn transform_all<S: AsRef<str>>(&self, texts: &[S]) -> Vec<SparseVector> {
        texts.iter().map(|t| self.transform(t.as_ref())).collect()
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }
}

#[cfg(test)]
mod tests;
