//! Tokenization and TF-IDF features.

mod tfidf;
mod tokenize;

pub use tfidf::{TfidfError, TfidfModel, DEFAULT_MAX_FEATURES, TFIDF_HEADER};
pub use tokenize::{tokenize, TokenStream, URL_TOKEN};

/// Sparse feature vector with strictly increasing column indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    /// Dimension of the feature space the indices live in.
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    /// Builds a vector from `(index, value)` pairs; zero values are dropped.
    ///
    /// # Panics
    /// If indices are not strictly increasing or not below `dim`.
    pub fn from_pairs(dim: usize, pairs: &[(u32, f64)]) -> Self {
        let mut v = SparseVector { dim, ..Default::default() };
        for &(i, x) in pairs {
            assert!((i as usize) < dim, "index {i} out of range for dimension {dim}");
            if let Some(&last) = v.indices.last() {
                assert!(i > last, "indices must be strictly increasing");
            }
            if x != 0.0 {
                v.indices.push(i);
                v.values.push(x);
            }
        }
        v
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Value at column `i` (zero when absent).
    pub fn get(&self, i: u32) -> f64 {
        match self.indices.binary_search(&i) {
            Ok(p) => self.values[p],
            Err(_) => 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scales to unit L2 norm; the zero vector is left alone.
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.values {
                *v /= n;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}
