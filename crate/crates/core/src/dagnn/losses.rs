use std::rc::Rc;

use ndarray::Array2;

use super::{EpsX, FeatLoss, HyperParams};
use crate::error::{Error, Result};
use crate::sparse::Edge;
use crate::tensor::{Tape, Tensor};

pub const TERM_NAMES: [&str; 6] = ["cls_enc", "rec_edge", "hom", "rec_feat", "cls_dec", "kl"];

/// Tensors of one objective evaluation.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub cls_enc: Tensor,
    pub rec_edge: Tensor,
    pub hom: Tensor,
    pub rec_feat: Tensor,
    pub cls_dec: Tensor,
    pub kl: Tensor,
    pub total: Tensor,
    pub eps: EpsX,
}

impl LossTerms {
    /// In [`TERM_NAMES`] order.
    pub fn terms(&self) -> [Tensor; 6] {
        [self.cls_enc, self.rec_edge, self.hom, self.rec_feat, self.cls_dec, self.kl]
    }

    pub fn values(&self, tape: &Tape) -> [f64; 6] {
        self.terms().map(|t| tape.scalar(t))
    }

    /// Fails naming the first non-finite term.
    pub fn check_finite(&self, tape: &Tape, epoch: usize) -> Result<()> {
        for (name, v) in TERM_NAMES.iter().zip(self.values(tape)) {
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    term: name.to_string(),
                    epoch,
                });
            }
        }
        if !tape.scalar(self.total).is_finite() {
            return Err(Error::NonFiniteLoss {
                term: "total".into(),
                epoch,
            });
        }
        Ok(())
    }
}

/// `N / (|E| + |E-|) * (Σ (p_reg - tau)^2 + Σ p_neg^2)`.
pub fn loss_rec_edge(tape: &mut Tape, p_reg: Tensor, tau: &[f64], p_neg: Tensor, n: usize) -> Result<Tensor> {
    if p_reg.cols() != 1 || p_neg.cols() != 1 || tau.len() != p_reg.rows() {
        return Err(Error::shape(
            "loss_rec_edge",
            format!("p_reg {:?}, tau {}, p_neg {:?}", p_reg.shape(), tau.len(), p_neg.shape()),
        ));
    }
    let count = p_reg.rows() + p_neg.rows();
    if count == 0 {
        return Err(Error::Invalid("edge reconstruction over an empty edge set".into()));
    }
    let neg_tau = Array2::from_shape_fn((tau.len(), 1), |(i, _)| -tau[i]);
    let diff = tape.add_const(p_reg, &neg_tau)?;
    let sq = tape.square(diff);
    let pos = tape.sum(sq);
    let sq = tape.square(p_neg);
    let neg = tape.sum(sq);
    let both = tape.add(pos, neg)?;
    Ok(tape.scale(both, n as f64 / count as f64))
}

/// Σ over nodes of the `p_hat`-weighted mean of `kl(Y_j || Y_i)` across
/// neighbours `j`. Nodes whose weights sum to zero contribute nothing.
pub fn loss_hom(tape: &mut Tape, y_hat: Tensor, p_hat: Tensor, edges: &[Edge]) -> Result<Tensor> {
    if p_hat.shape() != (edges.len(), 1) {
        return Err(Error::shape("loss_hom", format!("{:?} weights for {} edges", p_hat.shape(), edges.len())));
    }
    let n = y_hat.rows();
    let mut recv = Vec::with_capacity(2 * edges.len());
    let mut nbr = Vec::with_capacity(2 * edges.len());
    let mut eid = Vec::with_capacity(2 * edges.len());
    for (k, &(a, b)) in edges.iter().enumerate() {
        recv.extend([a, b]);
        nbr.extend([b, a]);
        eid.extend([k, k]);
    }
    let recv: Rc<[usize]> = recv.into();
    let yj = tape.gather_rows(y_hat, nbr.into())?;
    let yi = tape.gather_rows(y_hat, recv.clone())?;
    let kl = tape.kl_rows(yj, yi)?;
    let w = tape.gather_rows(p_hat, eid.into())?;
    let wk = tape.mul(w, kl)?;
    let num = tape.segment_sum(wk, recv.clone(), n)?;
    let den = tape.segment_sum(w, recv, n)?;
    let ratio = tape.safe_div(num, den)?;
    Ok(tape.sum(ratio))
}

/// Mean squared error, or mean binary cross-entropy of sigmoid outputs.
pub fn loss_rec_feat(tape: &mut Tape, recon: Tensor, target: &Rc<Array2<f64>>, kind: FeatLoss) -> Result<Tensor> {
    if recon.shape() != target.dim() {
        return Err(Error::shape("loss_rec_feat", format!("{:?} vs {:?}", recon.shape(), target.dim())));
    }
    Ok(match kind {
        FeatLoss::Mse => {
            let diff = tape.add_const(recon, &(-&**target))?;
            let sq = tape.square(diff);
            tape.mean(sq)
        }
        FeatLoss::Bce => {
            let probs = tape.sigmoid(recon);
            tape.binary_cross_entropy(probs, target.clone())?
        }
    })
}

/// `cls_enc + λ1 rec_edge + λ2 hom + λ3 (rec_feat + cls_dec + kl)`.
pub fn total_loss(tape: &mut Tape, terms: &[Tensor; 6], hp: &HyperParams) -> Tensor {
    let [cls_enc, rec_edge, hom, rec_feat, cls_dec, kl] = *terms;
    let add = |tape: &mut Tape, a, b| tape.add(a, b).expect("scalar terms");
    let a = tape.scale(rec_edge, hp.lambda1);
    let b = tape.scale(hom, hp.lambda2);
    let tail = add(tape, rec_feat, cls_dec);
    let tail = add(tape, tail, kl);
    let c = tape.scale(tail, hp.lambda3);
    let s = add(tape, cls_enc, a);
    let s = add(tape, s, b);
    add(tape, s, c)
}
