//! Compressed-row adjacency structures and the symmetric GCN normalization
//! `D^{-1/2} (A + I) D^{-1/2}` shared by the constant and learned-weight paths.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Unordered node pair stored as `(low, high)`.
pub type Edge = (usize, usize);

/// Canonical ordering of an unordered pair.
#[inline]
pub fn edge(a: usize, b: usize) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntrySource {
    SelfLoop,
    /// Index into the edge list the pattern was built from.
    Edge(usize),
}

/// Sparsity structure of a symmetric adjacency built from an undirected edge
/// list. Every undirected edge produces two stored entries, one per row; an
/// optional unit self-loop is stored first in each row. Duplicate edges are
/// kept as separate entries so their weights add.
#[derive(Clone, Debug)]
pub struct SparsePattern {
    n: usize,
    n_edges: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    source: Vec<EntrySource>,
}

impl SparsePattern {
    pub fn from_edges(n: usize, edges: &[Edge], self_loops: bool) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, EntrySource)>> = vec![Vec::new(); n];
        if self_loops {
            for (i, row) in rows.iter_mut().enumerate() {
                row.push((i, EntrySource::SelfLoop));
            }
        }
        for (e, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::Invalid(format!("self-loop edge ({u}, {u})")));
            }
            rows[u].push((v, EntrySource::Edge(e)));
            rows[v].push((u, EntrySource::Edge(e)));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut source = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, s) in row {
                col_idx.push(c);
                source.push(s);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparsePattern {
            n,
            n_edges: edges.len(),
            row_ptr,
            col_idx,
            source,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn source(&self) -> &[EntrySource] {
        &self.source
    }

    /// Per-entry weights before normalization.
    pub fn entry_weights(&self, edge_weights: &[f64]) -> Vec<f64> {
        self.source
            .iter()
            .map(|s| match *s {
                EntrySource::SelfLoop => 1.0,
                EntrySource::Edge(e) => edge_weights[e],
            })
            .collect()
    }

    /// Weighted degree of every node (row sums of the raw entries).
    pub fn degrees(&self, edge_weights: &[f64]) -> Vec<f64> {
        let raw = self.entry_weights(edge_weights);
        (0..self.n)
            .map(|i| raw[self.row_ptr[i]..self.row_ptr[i + 1]].iter().sum())
            .collect()
    }

    /// Symmetrically normalized entry values `w_ij / sqrt(d_i d_j)`. Entries
    /// touching a zero-degree node are 0.
    pub fn normalized_values(&self, edge_weights: &[f64]) -> Vec<f64> {
        let raw = self.entry_weights(edge_weights);
        let deg = self.degrees(edge_weights);
        let mut out = vec![0.0; raw.len()];
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let d = deg[r] * deg[self.col_idx[k]];
                out[k] = if d > 0.0 { raw[k] / d.sqrt() } else { 0.0 };
            }
        }
        out
    }
}

/// Constant-weight CSR matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAdj {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseAdj {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1
            || col_idx.len() != values.len()
            || row_ptr.last() != Some(&col_idx.len())
        {
            return Err(Error::shape("SparseAdj::new", "inconsistent CSR arrays"));
        }
        if col_idx.iter().any(|&c| c >= n_cols) {
            return Err(Error::shape("SparseAdj::new", "column index out of range"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sparse weight {v}")));
        }
        Ok(SparseAdj {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseAdj {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_pattern(pattern: &SparsePattern, values: Vec<f64>) -> Result<Self> {
        Self::new(
            pattern.n,
            pattern.n,
            pattern.row_ptr.clone(),
            pattern.col_idx.clone(),
            values,
        )
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterator over stored `(row, col, value)` triples.
    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (r, c, v) in self.triples() {
            out[[r, c]] += v;
        }
        out
    }

    /// True when the stored entries are symmetric as a weighted matrix.
    pub fn is_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let mut fwd: Vec<(usize, usize, u64)> =
            self.triples().map(|(r, c, v)| (r, c, v.to_bits())).collect();
        let mut rev: Vec<(usize, usize, u64)> =
            self.triples().map(|(r, c, v)| (c, r, v.to_bits())).collect();
        fwd.sort_unstable();
        rev.sort_unstable();
        fwd == rev
    }

    pub fn matmul_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        csr_matmul(self.n_rows, &self.row_ptr, &self.col_idx, &self.values, x)
    }
}

/// `out = M x` for a CSR matrix `M` given as raw arrays.
pub(crate) fn csr_matmul(
    n_rows: usize,
    row_ptr: &[usize],
    col_idx: &[usize],
    values: &[f64],
    x: &Array2<f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros((n_rows, x.ncols()));
    for r in 0..n_rows {
        let mut orow = out.row_mut(r);
        for k in row_ptr[r]..row_ptr[r + 1] {
            orow.scaled_add(values[k], &x.row(col_idx[k]));
        }
    }
    out
}

/// `out = Mᵀ g` for a CSR matrix `M` with `n_cols` columns.
pub(crate) fn csr_tmatmul(
    n_rows: usize,
    n_cols: usize,
    row_ptr: &[usize],
    col_idx: &[usize],
    values: &[f64],
    g: &Array2<f64>,
) -> Array2<f64> {
    let mut out = Array2::zeros((n_cols, g.ncols()));
    for r in 0..n_rows {
        let grow = g.row(r);
        for k in row_ptr[r]..row_ptr[r + 1] {
            out.row_mut(col_idx[k]).scaled_add(values[k], &grow);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pattern_orders_self_loop_first_and_duplicates_kept() {
        let p = SparsePattern::from_edges(3, &[(0, 1), (0, 1), (1, 2)], true).unwrap();
        assert_eq!(p.nnz(), 3 + 6);
        let row0: Vec<_> = (p.row_ptr()[0]..p.row_ptr()[1]).map(|k| p.col_idx()[k]).collect();
        assert_eq!(row0, vec![0, 1, 1]);
        assert_eq!(p.source()[0], EntrySource::SelfLoop);
    }

    #[test]
    fn rejects_self_loop_edges() {
        assert!(SparsePattern::from_edges(2, &[(1, 1)], false).is_err());
        assert!(SparsePattern::from_edges(2, &[(0, 5)], false).is_err());
    }

    #[test]
    fn csr_products_match_dense() {
        let p = SparsePattern::from_edges(3, &[(0, 1), (1, 2)], true).unwrap();
        let w = p.normalized_values(&[1.0, 2.0]);
        let adj = SparseAdj::from_pattern(&p, w).unwrap();
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]];
        let dense = adj.to_dense();
        assert!((adj.matmul_dense(&x) - dense.dot(&x)).iter().all(|v| v.abs() < 1e-14));
        let t = csr_tmatmul(3, 3, adj.row_ptr(), adj.col_idx(), adj.values(), &x);
        assert!((t - dense.t().dot(&x)).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn non_finite_weights_rejected() {
        assert!(SparseAdj::new(1, 1, vec![0, 1], vec![0], vec![f64::NAN]).is_err());
    }
}
