//! Pretrained word vectors, precomputed sentence vectors, and padded sequence encoding.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numfmt;
use crate::text_features::tokenize;
use crate::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 25;
pub const DEFAULT_MAX_SENTENCES: usize = 6;
pub const PRECOMPUTED_DIM: usize = 768;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Row(#[serde(with = "crate::numfmt::vec")] Vec<f64>);

/// Token → dense vector, all of one dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    vectors: BTreeMap<String, Row>,
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or overwrites a token.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        match self.dim {
            Some(d) if d != vector.len() => {
                return Err(Error::DimensionMismatch { expected: d, got: vector.len() })
            }
            None if vector.is_empty() => return Err(Error::invalid("embedding vectors must be non-empty")),
            _ => {}
        }
        self.dim = Some(vector.len());
        self.vectors.insert(token.into(), Row(vector));
        Ok(())
    }

    /// Errors when the table is empty.
    pub fn dim(&self) -> Result<usize> {
        self.dim.ok_or_else(|| Error::invalid("embedding table is empty; dimension undefined"))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(|r| r.0.as_slice())
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Keeps only the given tokens.
    pub fn restrict<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> EmbeddingTable {
        let mut out = EmbeddingTable { dim: self.dim, vectors: BTreeMap::new() };
        for t in tokens {
            if let Some(v) = self.vectors.get(t) {
                out.vectors.insert(t.to_string(), v.clone());
            }
        }
        out
    }
}

/// Parses the GloVe text format. Later duplicates overwrite earlier ones.
pub fn load_glove<R: BufRead>(reader: R) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let Some(token) = fields.next() else { continue };
        let vector = fields
            .map(|f| numfmt::parse(f).map_err(|e| Error::parse(lineno, format!("field {f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(Error::parse(lineno, format!("token {token:?} has no values")));
        }
        if let Some(d) = table.dim {
            if d != vector.len() {
                return Err(Error::parse(lineno, format!("expected {d} values, found {}", vector.len())));
            }
        }
        table.insert(token, vector)?;
    }
    Ok(table)
}

/// Writes the table in GloVe text format, tokens in sorted order.
pub fn write_glove<W: Write>(mut writer: W, table: &EmbeddingTable) -> Result<()> {
    for (token, row) in &table.vectors {
        write!(writer, "{token}")?;
        for v in &row.0 {
            write!(writer, " {}", numfmt::format(*v))?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Item id → 768-d vector produced by an external encoder.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedVectors {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl PrecomputedVectors {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PrecomputedLine {
    id: String,
    vector: Vec<f64>,
}

/// JSON Lines of `{id, vector}`; every vector must have 768 entries.
pub fn load_precomputed<R: BufRead>(reader: R) -> Result<PrecomputedVectors> {
    let mut out = PrecomputedVectors::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let rec: PrecomputedLine = serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e))?;
        if rec.vector.len() != PRECOMPUTED_DIM {
            return Err(Error::parse(
                lineno,
                format!("vector for {:?} has {} entries, expected {PRECOMPUTED_DIM}", rec.id, rec.vector.len()),
            ));
        }
        if out.vectors.contains_key(&rec.id) {
            return Err(Error::parse(lineno, format!("duplicate id {:?}", rec.id)));
        }
        out.vectors.insert(rec.id, rec.vector);
    }
    Ok(out)
}

/// Splits after '.', '!' or '?' when followed by whitespace or the end of text.
/// Terminators stay with their sentence; whitespace-only fragments are dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = chars.peek().map_or(true, |&(_, n)| n.is_whitespace());
            if boundary {
                let end = i + c.len_utf8();
                push_trimmed(&mut out, &text[start..end]);
                start = end;
            }
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, fragment: &str) {
    let t = fragment.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// A `max_len × dim` row-major matrix plus a mask of real tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub dim: usize,
    pub rows: Vec<f64>,
    pub mask: Vec<bool>,
}

impl EncodedSequence {
    pub fn max_len(&self) -> usize {
        self.mask.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t * self.dim..(t + 1) * self.dim]
    }

    pub fn active(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Appends `extra` padded rows.
    pub fn padded(&self, extra: usize) -> EncodedSequence {
        let mut out = self.clone();
        out.rows.extend(std::iter::repeat(0.0).take(extra * self.dim));
        out.mask.extend(std::iter::repeat(false).take(extra));
        out
    }
}

/// Tokenizes, truncates to `max_len`, and looks up each token. Unknown tokens
/// become zero rows that still count as real positions.
pub fn encode_sequence(text: &str, table: &EmbeddingTable, max_len: usize) -> Result<EncodedSequence> {
    encode_tokens(&tokenize(text), table, max_len)
}

pub fn encode_tokens(tokens: &[String], table: &EmbeddingTable, max_len: usize) -> Result<EncodedSequence> {
    let dim = table.dim()?;
    let mut rows = vec![0.0; max_len * dim];
    let mut mask = vec![false; max_len];
    for (t, token) in tokens.iter().take(max_len).enumerate() {
        mask[t] = true;
        if let Some(v) = table.get(token) {
            rows[t * dim..(t + 1) * dim].copy_from_slice(v);
        }
    }
    Ok(EncodedSequence { dim, rows, mask })
}

/// One encoded sequence per sentence, keeping at most `max_sentences`.
pub fn encode_document(
    text: &str,
    table: &EmbeddingTable,
    max_len: usize,
    max_sentences: usize,
) -> Result<Vec<EncodedSequence>> {
    split_sentences(text)
        .iter()
        .take(max_sentences)
        .map(|s| encode_sequence(s, table, max_len))
        .collect()
}

/// A reproducible random vector for `token`, uniform in (−1, 1). The value
/// depends only on the token, the dimension, and the seed.
pub fn toy_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// A table of [`toy_vector`]s covering every token of `texts`.
pub fn toy_table<S: AsRef<str>>(texts: &[S], dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let mut table = EmbeddingTable::new();
    for text in texts {
        for token in tokenize(text.as_ref()) {
            if table.get(&token).is_none() {
                let v = toy_vector(&token, dim, seed);
                table.insert(token, v)?;
            }
        }
    }
    Ok(table)
}
