//! Define-by-run reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! are methods on the tape that take [`Tensor`] handles and append a node;
//! [`Tape::backward`] walks the nodes in reverse insertion order, which is a
//! valid reverse topological order because a node can only reference nodes
//! that already exist.
//!
//! ```
//! use dang_lab::tensor::Tape;
//! use ndarray::array;
//!
//! let mut tape = Tape::new();
//! let x = tape.var(array![[1.0, -2.0, 3.0]]);
//! let y = tape.relu(x);
//! let loss = tape.sum(y);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.scalar(loss), 4.0);
//! assert_eq!(tape.grad(x).unwrap(), &array![[1.0, 0.0, 1.0]]);
//! ```

mod ops;
mod optim;

use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

pub use optim::{Adam, AdamConfig, OptimState, ParamId, ParamStore};

use crate::error::{Error, Result};
use crate::sparse::{csr_tmatmul, Edge, EntrySource, SparseAdj, SparsePattern};

/// Floor applied inside every logarithm of an entropy or divergence term.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    MulConst(usize, Array2<f64>),
    Relu(usize),
    Exp(usize),
    Sigmoid(usize),
    Clamp(usize, f64, f64),
    Square(usize),
    Sum(usize),
    Mean(usize),
    RowSoftmax(usize),
    ConcatCols(usize, usize),
    GatherRows(usize, Rc<[usize]>),
    SegmentSum(usize, Rc<[usize]>),
    SafeDiv(usize, usize),
    Spmm(Rc<SparseAdj>, usize),
    SpmmPattern(Rc<SparsePattern>, usize, usize),
    GcnNorm(Rc<SparsePattern>, usize),
    EdgeCosine(usize, Rc<[Edge]>),
    MaskedCrossEntropy(usize, Rc<[(usize, usize)]>),
    KlRows(usize, usize),
    GaussianKl(usize, usize),
    BinaryCrossEntropy(usize, Rc<Array2<f64>>),
}

struct Node {
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Recorded computation for a single forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that participates in differentiation.
    pub fn var(&mut self, value: Array2<f64>) -> Tensor {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf that does not.
    pub fn constant(&mut self, value: Array2<f64>) -> Tensor {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, t: Tensor) -> &Array2<f64> {
        &self.nodes[t.id].value
    }

    /// The single entry of a 1×1 tensor.
    pub fn scalar(&self, t: Tensor) -> f64 {
        self.nodes[t.id].value[[0, 0]]
    }

    pub fn grad(&self, t: Tensor) -> Option<&Array2<f64>> {
        self.nodes[t.id].grad.as_ref()
    }

    pub fn requires_grad(&self, t: Tensor) -> bool {
        self.nodes[t.id].requires_grad
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Array2<f64>, requires_grad: bool, op: Op) -> Tensor {
        let (rows, cols) = value.dim();
        let id = self.nodes.len();
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tensor { id, rows, cols }
    }

    fn derived(&mut self, value: Array2<f64>, inputs: &[usize], op: Op) -> Tensor {
        let rg = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.push(value, rg, op)
    }

    /// Accumulates d(loss)/d(node) into every reachable node that requires a
    /// gradient. Calling it again without [`Tape::zero_grad`] adds to the
    /// stored gradients.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if loss.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", loss.shape()),
            ));
        }
        if !self.nodes[loss.id].requires_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Array2<f64>>> = (0..=loss.id).map(|_| None).collect();
        adj[loss.id] = Some(Array2::ones((1, 1)));
        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            self.backprop(id, &g, &mut adj);
            let node = &mut self.nodes[id];
            match &mut node.grad {
                Some(acc) => *acc += &g,
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn backprop(&self, id: usize, g: &Array2<f64>, adj: &mut [Option<Array2<f64>>]) {
        let nodes = &self.nodes;
        let val = |i: usize| &nodes[i].value;
        let mut acc = |i: usize, delta: Array2<f64>| {
            if !nodes[i].requires_grad {
                return;
            }
            match &mut adj[i] {
                Some(a) => *a += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        let out = &nodes[id].value;
        match &nodes[id].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if nodes[a].requires_grad {
                    acc(a, g.dot(&val(b).t()));
                }
                if nodes[b].requires_grad {
                    acc(b, val(a).t().dot(g));
                }
            }
            &Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            &Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, -g);
            }
            &Op::Mul(a, b) => {
                acc(a, g * val(b));
                acc(b, g * val(a));
            }
            &Op::AddRow(a, bias) => {
                acc(a, g.clone());
                acc(bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            &Op::Scale(a, c) => acc(a, g * c),
            &Op::AddConst(a) => acc(a, g.clone()),
            Op::MulConst(a, c) => acc(*a, g * c),
            &Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(val(a))
                    .for_each(|d, &x| if x <= 0.0 { *d = 0.0 });
                acc(a, d);
            }
            &Op::Exp(a) => acc(a, g * out),
            &Op::Sigmoid(a) => acc(a, g * &out.mapv(|y| y * (1.0 - y))),
            &Op::Clamp(a, lo, hi) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(a)).for_each(|d, &x| {
                    if x < lo || x > hi {
                        *d = 0.0
                    }
                });
                acc(a, d);
            }
            &Op::Square(a) => acc(a, g * &(val(a) * 2.0)),
            &Op::Sum(a) => acc(a, Array2::from_elem(val(a).dim(), g[[0, 0]])),
            &Op::Mean(a) => {
                let n = val(a).len().max(1) as f64;
                acc(a, Array2::from_elem(val(a).dim(), g[[0, 0]] / n));
            }
            &Op::RowSoftmax(a) => {
                let mut d = Array2::zeros(out.dim());
                for ((mut drow, grow), yrow) in d
                    .rows_mut()
                    .into_iter()
                    .zip(g.rows())
                    .zip(out.rows())
                {
                    let dot = grow.dot(&yrow);
                    Zip::from(&mut drow)
                        .and(&grow)
                        .and(&yrow)
                        .for_each(|d, &gi, &yi| *d = yi * (gi - dot));
                }
                acc(a, d);
            }
            &Op::ConcatCols(a, b) => {
                let ca = val(a).ncols();
                acc(a, g.slice(s![.., ..ca]).to_owned());
                acc(b, g.slice(s![.., ca..]).to_owned());
            }
            Op::GatherRows(a, idx) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (r, &src) in idx.iter().enumerate() {
                    d.row_mut(src).scaled_add(1.0, &g.row(r));
                }
                acc(*a, d);
            }
            Op::SegmentSum(a, seg) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (r, &dst) in seg.iter().enumerate() {
                    d.row_mut(r).assign(&g.row(dst));
                }
                acc(*a, d);
            }
            &Op::SafeDiv(a, b) => {
                let (av, bv) = (val(a), val(b));
                let mut da = Array2::zeros(av.dim());
                let mut db = Array2::zeros(bv.dim());
                Zip::from(&mut da)
                    .and(&mut db)
                    .and(g)
                    .and(av)
                    .and(bv)
                    .for_each(|da, db, &gi, &x, &y| {
                        if y != 0.0 {
                            *da = gi / y;
                            *db = -gi * x / (y * y);
                        }
                    });
                acc(a, da);
                acc(b, db);
            }
            Op::Spmm(m, x) => {
                let (r, c) = m.shape();
                acc(
                    *x,
                    csr_tmatmul(r, c, m.row_ptr(), m.col_idx(), m.values(), g),
                );
            }
            Op::SpmmPattern(p, w, x) => {
                let wv = val(*w).as_slice().expect("standard layout");
                if nodes[*x].requires_grad {
                    acc(
                        *x,
                        csr_tmatmul(p.n(), p.n(), p.row_ptr(), p.col_idx(), wv, g),
                    );
                }
                if nodes[*w].requires_grad {
                    let xv = val(*x);
                    let mut dw = Array2::zeros((p.nnz(), 1));
                    for r in 0..p.n() {
                        for k in p.row_ptr()[r]..p.row_ptr()[r + 1] {
                            dw[[k, 0]] = g.row(r).dot(&xv.row(p.col_idx()[k]));
                        }
                    }
                    acc(*w, dw);
                }
            }
            Op::GcnNorm(p, w) => acc(*w, gcn_norm_backward(p, val(*w), out, g)),
            Op::EdgeCosine(z, pairs) => {
                let zv = val(*z);
                let mut d = Array2::zeros(zv.dim());
                for (e, &(u, v)) in pairs.iter().enumerate() {
                    let (zu, zv_) = (zv.row(u), zv.row(v));
                    let (nu, nv) = (zu.dot(&zu).sqrt(), zv_.dot(&zv_).sqrt());
                    if nu == 0.0 || nv == 0.0 {
                        continue;
                    }
                    let c = out[[e, 0]];
                    let ge = g[[e, 0]];
                    let inv = 1.0 / (nu * nv);
                    // d cos / d zu = zv / (|u||v|) - cos * zu / |u|^2
                    d.row_mut(u).scaled_add(ge * inv, &zv_);
                    d.row_mut(u).scaled_add(-ge * c / (nu * nu), &zu);
                    d.row_mut(v).scaled_add(ge * inv, &zu);
                    d.row_mut(v).scaled_add(-ge * c / (nv * nv), &zv_);
                }
                acc(*z, d);
            }
            Op::MaskedCrossEntropy(p, targets) => {
                let pv = val(*p);
                let m = targets.len() as f64;
                let mut d = Array2::zeros(pv.dim());
                for &(i, y) in targets.iter() {
                    let q = pv[[i, y]];
                    if q > LOG_FLOOR {
                        d[[i, y]] = -g[[0, 0]] / (m * q);
                    }
                }
                acc(*p, d);
            }
            &Op::KlRows(p, q) => {
                let (pv, qv) = (val(p), val(q));
                let mut dp = Array2::zeros(pv.dim());
                let mut dq = Array2::zeros(qv.dim());
                for r in 0..pv.nrows() {
                    let gr = g[[r, 0]];
                    for c in 0..pv.ncols() {
                        let (x, y) = (pv[[r, c]], qv[[r, c]]);
                        let step = if x > LOG_FLOOR { 1.0 } else { 0.0 };
                        dp[[r, c]] = gr * (x.max(LOG_FLOOR).ln() - y.max(LOG_FLOOR).ln() + step);
                        if y > LOG_FLOOR {
                            dq[[r, c]] = -gr * x / y;
                        }
                    }
                }
                acc(p, dp);
                acc(q, dq);
            }
            &Op::GaussianKl(mu, lv) => {
                let n = val(mu).nrows().max(1) as f64;
                let s = g[[0, 0]] / n;
                acc(mu, val(mu) * s);
                acc(lv, val(lv).mapv(|l| 0.5 * s * (l.exp() - 1.0)));
            }
            Op::BinaryCrossEntropy(p, t) => {
                let pv = val(*p);
                let n = pv.len().max(1) as f64;
                let s = g[[0, 0]] / n;
                let mut d = Array2::zeros(pv.dim());
                Zip::from(&mut d)
                    .and(pv)
                    .and(&**t)
                    .for_each(|d, &x, &y| {
                        let mut v = 0.0;
                        if x > LOG_FLOOR {
                            v -= y / x;
                        }
                        if 1.0 - x > LOG_FLOOR {
                            v += (1.0 - y) / (1.0 - x);
                        }
                        *d = s * v;
                    });
                acc(*p, d);
            }
        }
    }
}

/// Backward rule of the symmetric normalization `v_k = w_k / sqrt(d_r d_c)`
/// with respect to the raw per-edge weights.
fn gcn_norm_backward(
    p: &SparsePattern,
    edge_w: &Array2<f64>,
    out: &Array2<f64>,
    g: &Array2<f64>,
) -> Array2<f64> {
    let w = edge_w.as_slice().expect("standard layout");
    let deg = p.degrees(w);
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { d.sqrt().recip() } else { 0.0 })
        .collect();
    // dL/dd_i, collecting contributions from row i and column i.
    let mut d_deg = vec![0.0; p.n()];
    for r in 0..p.n() {
        for k in p.row_ptr()[r]..p.row_ptr()[r + 1] {
            let c = p.col_idx()[k];
            let gv = g[[k, 0]] * out[[k, 0]];
            if deg[r] > 0.0 {
                d_deg[r] -= 0.5 * gv / deg[r];
            }
            if deg[c] > 0.0 {
                d_deg[c] -= 0.5 * gv / deg[c];
            }
        }
    }
    let mut dw = Array2::zeros((p.n_edges(), 1));
    for r in 0..p.n() {
        for k in p.row_ptr()[r]..p.row_ptr()[r + 1] {
            if let EntrySource::Edge(e) = p.source()[k] {
                let c = p.col_idx()[k];
                // direct term plus the degree of row r (entry (c, r) adds d_c).
                dw[[e, 0]] += g[[k, 0]] * inv_sqrt[r] * inv_sqrt[c] + d_deg[r];
            }
        }
    }
    dw
}
