use std::rc::Rc;

use ndarray::{concatenate, Array2, Axis, Zip};
use rand::Rng;

use super::{Op, Tape, Tensor, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::sparse::{csr_matmul, Edge, SparseAdj, SparsePattern};

fn same_shape(op: &'static str, a: Tensor, b: Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

impl Tape {
    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let v = self.value(a).dot(self.value(b));
        Ok(self.derived(v, &[a.id, b.id], Op::MatMul(a.id, b.id)))
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        same_shape("add", a, b)?;
        let v = self.value(a) + self.value(b);
        Ok(self.derived(v, &[a.id, b.id], Op::Add(a.id, b.id)))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        same_shape("sub", a, b)?;
        let v = self.value(a) - self.value(b);
        Ok(self.derived(v, &[a.id, b.id], Op::Sub(a.id, b.id)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        same_shape("mul", a, b)?;
        let v = self.value(a) * self.value(b);
        Ok(self.derived(v, &[a.id, b.id], Op::Mul(a.id, b.id)))
    }

    /// Adds a 1×n row to every row of `a`.
    pub fn add_row(&mut self, a: Tensor, bias: Tensor) -> Result<Tensor> {
        if bias.rows != 1 || bias.cols != a.cols {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + {:?}", a.shape(), bias.shape()),
            ));
        }
        let v = self.value(a) + self.value(bias);
        Ok(self.derived(v, &[a.id, bias.id], Op::AddRow(a.id, bias.id)))
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        let v = self.value(a) * c;
        self.derived(v, &[a.id], Op::Scale(a.id, c))
    }

    pub fn add_const(&mut self, a: Tensor, c: &Array2<f64>) -> Result<Tensor> {
        if c.dim() != a.shape() {
            return Err(Error::shape("add_const", format!("{:?} vs {:?}", a.shape(), c.dim())));
        }
        let v = self.value(a) + c;
        Ok(self.derived(v, &[a.id], Op::AddConst(a.id)))
    }

    pub fn mul_const(&mut self, a: Tensor, c: Array2<f64>) -> Result<Tensor> {
        if c.dim() != a.shape() {
            return Err(Error::shape("mul_const", format!("{:?} vs {:?}", a.shape(), c.dim())));
        }
        let v = self.value(a) * &c;
        Ok(self.derived(v, &[a.id], Op::MulConst(a.id, c)))
    }

    /// `max(0, x)`; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, a: Tensor) -> Tensor {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.derived(v, &[a.id], Op::Relu(a.id))
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        let v = self.value(a).mapv(f64::exp);
        self.derived(v, &[a.id], Op::Exp(a.id))
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Tensor {
        let v = self.value(a).mapv(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.derived(v, &[a.id], Op::Sigmoid(a.id))
    }

    pub fn clamp(&mut self, a: Tensor, lo: f64, hi: f64) -> Tensor {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.derived(v, &[a.id], Op::Clamp(a.id, lo, hi))
    }

    pub fn square(&mut self, a: Tensor) -> Tensor {
        let v = self.value(a).mapv(|x| x * x);
        self.derived(v, &[a.id], Op::Square(a.id))
    }

    pub fn sum(&mut self, a: Tensor) -> Tensor {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.derived(v, &[a.id], Op::Sum(a.id))
    }

    pub fn mean(&mut self, a: Tensor) -> Tensor {
        let n = self.value(a).len().max(1) as f64;
        let v = Array2::from_elem((1, 1), self.value(a).sum() / n);
        self.derived(v, &[a.id], Op::Mean(a.id))
    }

    /// Softmax over each row, computed with max subtraction.
    pub fn row_softmax(&mut self, a: Tensor) -> Tensor {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row /= s;
        }
        self.derived(v, &[a.id], Op::RowSoftmax(a.id))
    }

    pub fn concat_cols(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.rows != b.rows {
            return Err(Error::shape(
                "concat_cols",
                format!("{:?} | {:?}", a.shape(), b.shape()),
            ));
        }
        let v = concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts checked");
        Ok(self.derived(v, &[a.id, b.id], Op::ConcatCols(a.id, b.id)))
    }

    /// Output row `r` is input row `idx[r]`.
    pub fn gather_rows(&mut self, a: Tensor, idx: Rc<[usize]>) -> Result<Tensor> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= a.rows) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {}", a.rows)));
        }
        let v = self.value(a).select(Axis(0), &idx);
        Ok(self.derived(v, &[a.id], Op::GatherRows(a.id, idx)))
    }

    /// Sums input row `r` into output row `seg[r]`; the output has `n` rows.
    pub fn segment_sum(&mut self, a: Tensor, seg: Rc<[usize]>, n: usize) -> Result<Tensor> {
        if seg.len() != a.rows {
            return Err(Error::shape(
                "segment_sum",
                format!("{} segment ids for {} rows", seg.len(), a.rows),
            ));
        }
        if seg.iter().any(|&s| s >= n) {
            return Err(Error::shape("segment_sum", "segment id out of range"));
        }
        let av = self.value(a);
        let mut v = Array2::zeros((n, a.cols));
        for (r, &dst) in seg.iter().enumerate() {
            v.row_mut(dst).scaled_add(1.0, &av.row(r));
        }
        Ok(self.derived(v, &[a.id], Op::SegmentSum(a.id, seg)))
    }

    /// Elementwise `a / b`, defined as 0 wherever `b == 0`.
    pub fn safe_div(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        same_shape("safe_div", a, b)?;
        let mut v = Array2::zeros(a.shape());
        Zip::from(&mut v)
            .and(self.value(a))
            .and(self.value(b))
            .for_each(|o, &x, &y| *o = if y != 0.0 { x / y } else { 0.0 });
        Ok(self.derived(v, &[a.id, b.id], Op::SafeDiv(a.id, b.id)))
    }

    /// Sparse-dense product with constant sparse weights.
    pub fn spmm(&mut self, adj: Rc<SparseAdj>, x: Tensor) -> Result<Tensor> {
        let (r, c) = adj.shape();
        if c != x.rows {
            return Err(Error::shape("spmm", format!("adj {r}x{c} times {:?}", x.shape())));
        }
        let v = adj.matmul_dense(self.value(x));
        Ok(self.derived(v, &[x.id], Op::Spmm(adj, x.id)))
    }

    /// Sparse-dense product where the stored entry values are themselves a
    /// differentiable `nnz×1` tensor.
    pub fn spmm_pattern(
        &mut self,
        pattern: Rc<SparsePattern>,
        values: Tensor,
        x: Tensor,
    ) -> Result<Tensor> {
        if values.shape() != (pattern.nnz(), 1) {
            return Err(Error::shape(
                "spmm_pattern",
                format!("values {:?} for nnz {}", values.shape(), pattern.nnz()),
            ));
        }
        if pattern.n() != x.rows {
            return Err(Error::shape(
                "spmm_pattern",
                format!("pattern n={} times {:?}", pattern.n(), x.shape()),
            ));
        }
        let wv = self.value(values);
        if let Some(w) = wv.iter().find(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("adjacency weight {w}")));
        }
        let v = csr_matmul(
            pattern.n(),
            pattern.row_ptr(),
            pattern.col_idx(),
            wv.as_slice().expect("standard layout"),
            self.value(x),
        );
        Ok(self.derived(v, &[values.id, x.id], Op::SpmmPattern(pattern, values.id, x.id)))
    }

    /// Symmetric normalization of per-edge weights (`E×1`) into per-entry
    /// values (`nnz×1`) of `pattern`, including its unit self-loops.
    pub fn gcn_norm(&mut self, pattern: Rc<SparsePattern>, edge_w: Tensor) -> Result<Tensor> {
        if edge_w.shape() != (pattern.n_edges(), 1) {
            return Err(Error::shape(
                "gcn_norm",
                format!("weights {:?} for {} edges", edge_w.shape(), pattern.n_edges()),
            ));
        }
        let w = self.value(edge_w);
        if w.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::Invalid("edge weights must be finite and >= 0".into()));
        }
        let vals = pattern.normalized_values(w.as_slice().expect("standard layout"));
        let v = Array2::from_shape_vec((vals.len(), 1), vals).expect("length");
        Ok(self.derived(v, &[edge_w.id], Op::GcnNorm(pattern, edge_w.id)))
    }

    /// Cosine similarity between rows `u` and `v` of `z` for every pair,
    /// as an `E×1` column. Pairs with a zero-norm row score 0.
    pub fn edge_cosine(&mut self, z: Tensor, pairs: Rc<[Edge]>) -> Result<Tensor> {
        if pairs.iter().any(|&(u, v)| u >= z.rows || v >= z.rows) {
            return Err(Error::shape("edge_cosine", "pair index out of range"));
        }
        let zv = self.value(z);
        let norms: Vec<f64> = zv.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let mut v = Array2::zeros((pairs.len(), 1));
        for (e, &(a, b)) in pairs.iter().enumerate() {
            let d = norms[a] * norms[b];
            if d > 0.0 {
                v[[e, 0]] = (zv.row(a).dot(&zv.row(b)) / d).clamp(-1.0, 1.0);
            }
        }
        Ok(self.derived(v, &[z.id], Op::EdgeCosine(z.id, pairs)))
    }

    /// Mean negative log-likelihood of `labels` under row distributions
    /// `probs`, over the nodes selected by `mask`.
    pub fn masked_cross_entropy(
        &mut self,
        probs: Tensor,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<Tensor> {
        if labels.len() != probs.rows || mask.len() != probs.rows {
            return Err(Error::shape(
                "masked_cross_entropy",
                format!("{} labels, {} mask for {:?}", labels.len(), mask.len(), probs.shape()),
            ));
        }
        let targets: Vec<(usize, usize)> = mask
            .iter()
            .zip(labels)
            .enumerate()
            .filter(|(_, (&m, _))| m)
            .map(|(i, (_, &y))| (i, y))
            .collect();
        if targets.is_empty() {
            return Err(Error::Invalid("cross-entropy mask selects no nodes".into()));
        }
        if let Some(&(i, y)) = targets.iter().find(|&&(_, y)| y >= probs.cols) {
            return Err(Error::Invalid(format!(
                "label {y} of node {i} out of range for {} classes",
                probs.cols
            )));
        }
        let pv = self.value(probs);
        let nll: f64 = targets
            .iter()
            .map(|&(i, y)| -pv[[i, y]].max(LOG_FLOOR).ln())
            .sum::<f64>()
            / targets.len() as f64;
        let v = Array2::from_elem((1, 1), nll);
        Ok(self.derived(
            v,
            &[probs.id],
            Op::MaskedCrossEntropy(probs.id, targets.into()),
        ))
    }

    /// Per-row `KL(p || q) = Σ p (ln p - ln q)` with both logs floored.
    pub fn kl_rows(&mut self, p: Tensor, q: Tensor) -> Result<Tensor> {
        same_shape("kl_rows", p, q)?;
        let (pv, qv) = (self.value(p), self.value(q));
        let mut v = Array2::zeros((p.rows, 1));
        for r in 0..p.rows {
            let mut s = 0.0;
            for c in 0..p.cols {
                let (x, y) = (pv[[r, c]], qv[[r, c]]);
                s += x * (x.max(LOG_FLOOR).ln() - y.max(LOG_FLOOR).ln());
            }
            v[[r, 0]] = s;
        }
        Ok(self.derived(v, &[p.id, q.id], Op::KlRows(p.id, q.id)))
    }

    /// KL of `N(mu, exp(logvar))` to the standard normal, summed over columns
    /// and averaged over rows.
    pub fn gaussian_kl(&mut self, mu: Tensor, logvar: Tensor) -> Result<Tensor> {
        same_shape("gaussian_kl", mu, logvar)?;
        let (m, l) = (self.value(mu), self.value(logvar));
        if m.iter().chain(l.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gaussian_kl input".into()));
        }
        let mut total = 0.0;
        Zip::from(m)
            .and(l)
            .for_each(|&m, &l| total += -0.5 * (1.0 + l - m * m - l.exp()));
        let v = Array2::from_elem((1, 1), total / mu.rows.max(1) as f64);
        Ok(self.derived(v, &[mu.id, logvar.id], Op::GaussianKl(mu.id, logvar.id)))
    }

    /// Mean binary cross-entropy of probabilities against constant targets.
    pub fn binary_cross_entropy(&mut self, probs: Tensor, target: Rc<Array2<f64>>) -> Result<Tensor> {
        if target.dim() != probs.shape() {
            return Err(Error::shape("binary_cross_entropy", "target shape"));
        }
        let pv = self.value(probs);
        let mut total = 0.0;
        Zip::from(pv).and(&*target).for_each(|&x, &y| {
            total -= y * x.max(LOG_FLOOR).ln() + (1.0 - y) * (1.0 - x).max(LOG_FLOOR).ln();
        });
        let v = Array2::from_elem((1, 1), total / pv.len().max(1) as f64);
        Ok(self.derived(v, &[probs.id], Op::BinaryCrossEntropy(probs.id, target)))
    }

    /// Inverted dropout. With `training == false` or `rate == 0` the input
    /// handle is returned unchanged.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Tensor,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Invalid(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let mask = Array2::from_shape_simple_fn(x.shape(), || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        self.mul_const(x, mask)
    }
}
