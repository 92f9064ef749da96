use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A bag of `D`-dimensional local descriptors belonging to one image.
///
/// Rows are stored contiguously in row-major order. A set may be empty
/// (a scale that produced no feature-map cells); operations that need data
/// reject empty sets themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    image_id: String,
    dim: usize,
    data: Vec<f64>,
}

impl DescriptorSet {
    pub fn new(image_id: impl Into<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("descriptor dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            dim,
            data,
        })
    }

    pub fn from_rows(image_id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyInput("no rows given".into()))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Shape(format!(
                    "row {t} has {} values, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(image_id, dim, data)
    }

    pub fn empty(image_id: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new(image_id, dim, Vec::new())
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn set_image_id(&mut self, image_id: impl Into<String>) {
        self.image_id = image_id.into();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of descriptors `T`.
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Fails with [`Error::InvalidDescriptor`] on the first NaN or infinite entry.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::InvalidDescriptor(format!(
                "{}: non-finite value at row {}, column {}",
                self.image_id,
                i / self.dim,
                i % self.dim
            ))),
        }
    }

    /// New set holding the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> DescriptorSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &t in indices {
            data.extend_from_slice(self.row(t));
        }
        DescriptorSet {
            image_id: self.image_id.clone(),
            dim: self.dim,
            data,
        }
    }

    /// Appends the rows of `other`.
    pub fn extend(&mut self, other: &DescriptorSet) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Shape(format!(
                "cannot append dimension {} rows to dimension {} set",
                other.dim, self.dim
            )));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    /// Row indices sorted lexicographically by value.
    ///
    /// Accumulating in this order makes sums over the set independent of the
    /// order the rows were supplied in.
    pub(crate) fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(self.row(a), self.row(b)));
        order
    }

    /// Number of distinct rows, counting bit-identical rows once.
    pub(crate) fn distinct_rows(&self) -> usize {
        let order = self.canonical_order();
        order
            .windows(2)
            .filter(|w| lex_cmp(self.row(w[0]), self.row(w[1])) != Ordering::Equal)
            .count()
            + usize::from(!order.is_empty())
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}
