//! Layer building blocks shared by the variational model and the baseline.

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;

use crate::error::Result;
use crate::sparse::{SparseAdj, SparsePattern};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor};

/// Fan-based uniform initialization, `U(-a, a)` with `a = sqrt(6 / (in + out))`.
pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-a..=a))
}

/// Affine map `x W + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.w"), glorot(fan_in, fan_out, rng));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, fan_out)));
        Linear { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, tape: &mut Tape, p: &[Tensor], x: Tensor) -> Result<Tensor> {
        let h = tape.matmul(x, p[self.w.0])?;
        tape.add_row(h, p[self.b.0])
    }
}

/// Message-passing operator for one forward pass.
#[derive(Clone)]
pub enum Propagate {
    Fixed(Rc<SparseAdj>),
    /// Entry values computed on the tape, e.g. from learned edge weights.
    Weighted(Rc<SparsePattern>, Tensor),
}

impl Propagate {
    pub fn apply(&self, tape: &mut Tape, x: Tensor) -> Result<Tensor> {
        match self {
            Propagate::Fixed(adj) => tape.spmm(adj.clone(), x),
            Propagate::Weighted(pat, vals) => tape.spmm_pattern(pat.clone(), *vals, x),
        }
    }
}

/// Two graph-convolution layers with ReLU and dropout in between.
/// Returns logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gcn2 {
    pub l1: Linear,
    pub l2: Linear,
}

impl Gcn2 {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: (usize, usize, usize),
        rng: &mut R,
    ) -> Self {
        Gcn2 {
            l1: Linear::new(store, &format!("{name}.0"), dims.0, dims.1, rng),
            l2: Linear::new(store, &format!("{name}.1"), dims.1, dims.2, rng),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &[Tensor],
        prop: &Propagate,
        x: Tensor,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor> {
        let h = tape.matmul(x, p[self.l1.w.0])?;
        let h = prop.apply(tape, h)?;
        let h = tape.add_row(h, p[self.l1.b.0])?;
        let h = tape.relu(h);
        let h = tape.dropout(h, dropout, training, rng)?;
        let h = tape.matmul(h, p[self.l2.w.0])?;
        let h = prop.apply(tape, h)?;
        tape.add_row(h, p[self.l2.b.0])
    }
}

/// Two affine layers with ReLU and dropout in between. Returns logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mlp2 {
    pub l1: Linear,
    pub l2: Linear,
}

impl Mlp2 {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: (usize, usize, usize),
        rng: &mut R,
    ) -> Self {
        Mlp2 {
            l1: Linear::new(store, &format!("{name}.0"), dims.0, dims.1, rng),
            l2: Linear::new(store, &format!("{name}.1"), dims.1, dims.2, rng),
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &[Tensor],
        x: Tensor,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor> {
        let h = self.l1.forward(tape, p, x)?;
        let h = tape.relu(h);
        let h = tape.dropout(h, dropout, training, rng)?;
        self.l2.forward(tape, p, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = glorot(10, 6, &mut rng);
        let a = (6.0f64 / 16.0).sqrt();
        assert!(w.iter().all(|x| x.abs() <= a));
        assert!(w.iter().any(|x| x.abs() > a / 2.0));
    }

    #[test]
    fn gcn_on_identity_is_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let g = Gcn2::new(&mut store, "g", (3, 4, 2), &mut rng);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 0.5);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let xt = tape.constant(x.clone());
        let prop = Propagate::Fixed(Rc::new(SparseAdj::identity(5)));
        let a = g.forward(&mut tape, &p, &prop, xt, 0.0, false, &mut rng).unwrap();
        let mlp = Mlp2 { l1: g.l1, l2: g.l2 };
        let b = mlp.forward(&mut tape, &p, xt, 0.0, false, &mut rng).unwrap();
        let d = tape.value(a) - tape.value(b);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }
}
