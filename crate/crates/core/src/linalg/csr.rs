use nalgebra::DMatrix;

use crate::{Error, Result};

/// Symmetric matrix in compressed sparse row form, storing both triangles.
///
/// Column indices are sorted within each row, there are no duplicates and
/// the pattern and values are symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetricMatrix {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetricMatrix {
    /// Builds from raw CSR arrays, checking structure and symmetry.
    pub fn from_csr(
        dim: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = Self {
            dim,
            row_offsets,
            col_indices,
            values,
        };
        m.check()?;
        Ok(m)
    }

    /// Trusted constructor for assembly output that is valid by construction.
    pub(crate) fn from_parts_unchecked(
        dim: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let m = Self {
            dim,
            row_offsets,
            col_indices,
            values,
        };
        debug_assert!(m.check().is_ok());
        m
    }

    /// Builds from unordered `(row, col, value)` triplets covering both
    /// triangles. Exact zeros are dropped; duplicates are rejected.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.retain(|t| t.2 != 0.0);
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; dim + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for w in triplets.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate entry ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        for &(i, j, v) in &triplets {
            if i >= dim || j >= dim {
                return Err(Error::IndexOutOfRange {
                    index: i.max(j),
                    len: dim,
                });
            }
            row_offsets[i + 1] += 1;
            col_indices.push(j);
            values.push(v);
        }
        for i in 0..dim {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::from_csr(dim, row_offsets, col_indices, values)
    }

    /// Builds from a dense row-major array, dropping exact zeros.
    pub fn from_dense(dim: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: dense.len(),
            });
        }
        let mut triplets = Vec::new();
        for i in 0..dim {
            for j in 0..dim {
                let v = dense[i * dim + j];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(dim, triplets)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, s: f64) -> Self {
        Self {
            dim,
            row_offsets: (0..=dim).collect(),
            col_indices: (0..dim).collect(),
            values: vec![s; dim],
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("invalid CSR: {msg}")));
        if self.row_offsets.len() != self.dim + 1 || self.row_offsets[0] != 0 {
            return bad("row_offsets must have length N+1 and start at 0".into());
        }
        if self.col_indices.len() != self.values.len()
            || *self.row_offsets.last().unwrap() != self.values.len()
        {
            return bad("index and value arrays must both have length nnz".into());
        }
        for i in 0..self.dim {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if lo > hi {
                return bad(format!("row_offsets not monotone at row {i}"));
            }
            let cols = &self.col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("columns of row {i} not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c >= self.dim) {
                return bad(format!("column index out of range in row {i}"));
            }
        }
        for i in 0..self.dim {
            for (&j, &v) in self.row_cols(i).iter().zip(self.row_values(i)) {
                match self.get_opt(j, i) {
                    Some(w) if w.to_bits() == v.to_bits() => {}
                    _ => return bad(format!("entry ({i}, {j}) has no matching ({j}, {i})")),
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    fn get_opt(&self, i: usize, j: usize) -> Option<f64> {
        let cols = self.row_cols(i);
        cols.binary_search(&j).ok().map(|k| self.row_values(i)[k])
    }

    /// Entry `(i, j)`; structurally absent entries are zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.get_opt(i, j).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            *yi = self.col_indices[lo..hi]
                .iter()
                .zip(&self.values[lo..hi])
                .map(|(&j, &v)| v * x[j])
                .sum();
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// Fraction of structurally nonzero entries, `nnz / N^2`.
    pub fn sparsity_fraction(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.dim as f64 * self.dim as f64)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (&j, &v) in self.row_cols(i).iter().zip(self.row_values(i)) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Returns `A + diag(add)`, inserting diagonal entries that are absent.
    /// `S A S` for the diagonal matrix `S = diag(s)`.
    pub fn scaled_symmetric(&self, s: &[f64]) -> Self {
        let mut values = self.values.clone();
        for i in 0..self.dim {
            let range = self.row_offsets[i]..self.row_offsets[i + 1];
            for (v, &j) in values[range.clone()].iter_mut().zip(&self.col_indices[range]) {
                // s_i s_j is commutative in floating point, so symmetry is exact.
                *v *= s[i] * s[j];
            }
        }
        Self::from_parts_unchecked(self.dim, self.row_offsets.clone(), self.col_indices.clone(), values)
    }

    pub fn with_diagonal_added(&self, add: &[f64]) -> Self {
        let mut row_offsets = Vec::with_capacity(self.dim + 1);
        let mut col_indices = Vec::with_capacity(self.nnz() + self.dim);
        let mut values = Vec::with_capacity(self.nnz() + self.dim);
        row_offsets.push(0);
        for i in 0..self.dim {
            let mut placed = false;
            for (&j, &v) in self.row_cols(i).iter().zip(self.row_values(i)) {
                if j == i {
                    let d = v + add[i];
                    if d != 0.0 {
                        col_indices.push(j);
                        values.push(d);
                    }
                    placed = true;
                } else {
                    if j > i && !placed {
                        if add[i] != 0.0 {
                            col_indices.push(i);
                            values.push(add[i]);
                        }
                        placed = true;
                    }
                    col_indices.push(j);
                    values.push(v);
                }
            }
            if !placed && add[i] != 0.0 {
                col_indices.push(i);
                values.push(add[i]);
            }
            row_offsets.push(values.len());
        }
        Self::from_parts_unchecked(self.dim, row_offsets, col_indices, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_sparsity() {
        let m = SparseSymmetricMatrix::identity(10);
        assert_eq!(m.sparsity_fraction(), 0.1);
    }

    #[test]
    fn dense_sparsity() {
        let m = SparseSymmetricMatrix::from_dense(3, &[1.0; 9]).unwrap();
        assert_eq!(m.sparsity_fraction(), 1.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let r = SparseSymmetricMatrix::from_dense(2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_unsorted_columns() {
        let r = SparseSymmetricMatrix::from_csr(2, vec![0, 2, 4], vec![1, 0, 0, 1], vec![1.0; 4]);
        assert!(r.is_err());
    }

    #[test]
    fn matvec_matches_dense() {
        let d = [2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let m = SparseSymmetricMatrix::from_dense(3, &d).unwrap();
        assert_eq!(m.nnz(), 7);
        let y = m.matvec(&[1.0, 2.0, 3.0]);
        assert_eq!(y, vec![0.0, 0.0, 4.0]);
    }

    #[test]
    fn diagonal_insertion() {
        let d = [0.0, 1.0, 1.0, 0.0];
        let m = SparseSymmetricMatrix::from_dense(2, &d).unwrap();
        let m2 = m.with_diagonal_added(&[3.0, 4.0]);
        assert_eq!(m2.diagonal(), vec![3.0, 4.0]);
        assert_eq!(m2.get(0, 1), 1.0);
        assert!(SparseSymmetricMatrix::from_csr(
            2,
            m2.row_offsets().to_vec(),
            m2.col_indices().to_vec(),
            m2.values().to_vec()
        )
        .is_ok());
    }
}
