use serde::{Deserialize, Serialize};

/// Sparse real vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Build from unordered `(index, value)` pairs; zero values are dropped.
    ///
    /// Panics if an index is out of range.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut pairs: Vec<(usize, f64)> = pairs.into_iter().filter(|&(_, v)| v != 0.0).collect();
        pairs.sort_by_key(|&(i, _)| i);
        pairs.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        assert!(pairs.last().is_none_or(|&(i, _)| i < dim), "index out of range");
        let (indices, values) = pairs.into_iter().unzip();
        SparseVector {
            dim,
            indices,
            values,
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self::from_pairs(values.len(), values.iter().copied().enumerate())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Value at `index`, zero when absent.
    pub fn get(&self, index: usize) -> f64 {
        self.indices
            .binary_search(&index)
            .map_or(0.0, |p| self.values[p])
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        SparseVector {
            dim: self.dim,
            indices: self.indices.clone(),
            values: self.iter().map(|(i, v)| f(i, v)).collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Column-major copy of a row-sparse matrix: per feature, `(row, value)` in row order.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    pub n_rows: usize,
    pub columns: Vec<Vec<(usize, f64)>>,
}

impl CscMatrix {
    pub fn from_rows(rows: &[SparseVector], dim: usize) -> Self {
        let mut columns = vec![Vec::new(); dim];
        for (r, row) in rows.iter().enumerate() {
            for (i, v) in row.iter() {
                columns[i].push((r, v));
            }
        }
        CscMatrix {
            n_rows: rows.len(),
            columns,
        }
    }
}
