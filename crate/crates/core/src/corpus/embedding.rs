use crate::error::{Error, Result};

/// An `N x D` matrix of feature vectors, row-major, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f64>,
    rows: usize,
    dim: usize,
    pub source_id: String,
    pub extractor_id: String,
}

impl EmbeddingSet {
    /// Builds a set from a row-major buffer, checking shape and finiteness.
    pub fn new(
        data: Vec<f64>,
        rows: usize,
        dim: usize,
        source_id: impl Into<String>,
        extractor_id: impl Into<String>,
    ) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "embedding set must be at least 1x1, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "buffer of {} values does not match {rows}x{dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in row {} (column {})",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            data,
            rows,
            dim,
            source_id: source_id.into(),
            extractor_id: extractor_id.into(),
        })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        source_id: impl Into<String>,
        extractor_id: impl Into<String>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::Shape(format!(
                "row {i} has {} entries, expected {dim}",
                r.len()
            )));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(data, rows.len(), dim, source_id, extractor_id)
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// A new set holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows) {
            return Err(Error::Range(format!(
                "row index {bad} out of range for {} rows",
                self.rows
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(
            data,
            indices.len(),
            self.dim,
            self.source_id.clone(),
            self.extractor_id.clone(),
        )
    }
}
