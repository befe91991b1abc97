//! The variational model: encoders for the clean structure, clean labels
//! and the two noise sources, decoders for structure, features and
//! observed labels, and the six objective terms.

mod checkpoint;
mod context;
mod losses;

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Manifest, CHECKPOINT_MAGIC};
pub use context::GraphContext;
pub use losses::{loss_hom, loss_rec_edge, loss_rec_feat, total_loss, LossTerms, TERM_NAMES};

use crate::error::{Error, Result};
use crate::nn::{Gcn2, Linear, Mlp2, Propagate};
use crate::sparse::Edge;
use crate::tensor::{ParamStore, Tape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatLoss {
    #[default]
    Mse,
    Bce,
}

/// Which causal links of the generative model are kept.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    /// Label decoder sees only the clean-label estimate.
    Case3,
    /// Additionally no feature term in structure decoding or noise encoding.
    Case2,
    /// Additionally no structure-noise variable.
    Case1,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::Case3, Ablation::Case2, Ablation::Case1];

    pub fn label_decoder_uses_graph(self) -> bool {
        self == Ablation::Full
    }

    pub fn uses_feature_links(self) -> bool {
        matches!(self, Ablation::Full | Ablation::Case3)
    }

    pub fn uses_structure_noise(self) -> bool {
        self != Ablation::Case1
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Ablation::Full,
            "case3" => Ablation::Case3,
            "case2" => Ablation::Case2,
            "case1" => Ablation::Case1,
            other => return Err(Error::Validation(format!("unknown ablation `{other}`"))),
        })
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::Case3 => "case3",
            Ablation::Case2 => "case2",
            Ablation::Case1 => "case1",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Weight of the learned probability against raw feature similarity on
    /// positive edges.
    pub theta1_mix: f64,
    pub k_knn: usize,
    pub gamma_hop: usize,
    pub xi_ema: f64,
    pub d1: usize,
    pub d2: usize,
    pub hidden_phi1: usize,
    pub hidden_phi3: usize,
    pub hidden_phi21: usize,
    pub hidden_theta2: usize,
    pub hidden_theta3: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub early_epochs: usize,
    pub feat_loss: FeatLoss,
    /// Feed a gradient-free copy of the label estimate to the noise encoder
    /// and the decoders.
    pub detach_y: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda1: 0.3,
            lambda2: 0.003,
            lambda3: 0.001,
            theta1_mix: 0.2,
            k_knn: 10,
            gamma_hop: 1,
            xi_ema: 0.9,
            d1: 64,
            d2: 16,
            hidden_phi1: 64,
            hidden_phi3: 128,
            hidden_phi21: 64,
            hidden_theta2: 64,
            hidden_theta3: 64,
            dropout: 0.6,
            weight_decay: 5e-4,
            early_epochs: 30,
            feat_loss: FeatLoss::Mse,
            detach_y: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.xi_ema) {
            return Err(Error::Validation(format!("xi_ema must be in [0,1], got {}", self.xi_ema)));
        }
        if !(0.0..=1.0).contains(&self.theta1_mix) {
            return Err(Error::Validation(format!("theta1_mix must be in [0,1], got {}", self.theta1_mix)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("d1", self.d1), ("d2", self.d2), ("hidden_phi1", self.hidden_phi1), ("hidden_phi3", self.hidden_phi3)] {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Noise encoder: shared hidden layer with mean and log-variance heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpsEncoder {
    pub hidden: Linear,
    pub mu: Linear,
    pub logvar: Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelDecoder {
    Gcn(Gcn2),
    Mlp(Mlp2),
}

/// All trainable weights. Registration order is fixed and defines the
/// checkpoint layout.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub store: ParamStore,
    pub phi1: Gcn2,
    pub phi3: Gcn2,
    pub phi21: EpsEncoder,
    pub theta2: Mlp2,
    pub theta3: LabelDecoder,
}

impl ModelParams {
    pub fn new<R: Rng + ?Sized>(f: usize, c: usize, hp: &HyperParams, ablation: Ablation, rng: &mut R) -> Self {
        let mut s = ParamStore::new();
        let phi1 = Gcn2::new(&mut s, "phi1", (f, hp.hidden_phi1, hp.d1), rng);
        let phi3 = Gcn2::new(&mut s, "phi3", (f, hp.hidden_phi3, c), rng);
        let eps_in = if ablation.uses_feature_links() { f + c } else { c };
        let phi21 = EpsEncoder {
            hidden: Linear::new(&mut s, "phi21.0", eps_in, hp.hidden_phi21, rng),
            mu: Linear::new(&mut s, "phi21.mu", hp.hidden_phi21, hp.d2, rng),
            logvar: Linear::new(&mut s, "phi21.logvar", hp.hidden_phi21, hp.d2, rng),
        };
        let theta2 = Mlp2::new(&mut s, "theta2", (hp.d2 + c, hp.hidden_theta2, f), rng);
        let theta3 = if ablation.label_decoder_uses_graph() {
            LabelDecoder::Gcn(Gcn2::new(&mut s, "theta3", (f + c, hp.hidden_theta3, c), rng))
        } else {
            LabelDecoder::Mlp(Mlp2::new(&mut s, "theta3", (c, hp.hidden_theta3, c), rng))
        };
        ModelParams {
            store: s,
            phi1,
            phi3,
            phi21,
            theta2,
            theta3,
        }
    }
}

/// Per-epoch inferred quantities, as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub z: Array2<f64>,
    /// One entry per candidate edge.
    pub p_hat: Vec<f64>,
    pub y_hat: Array2<f64>,
    pub mu: Array2<f64>,
    pub logvar: Array2<f64>,
    pub eps_x_sample: Array2<f64>,
    /// Early-learning score per observed edge.
    pub p_el: Vec<f64>,
    /// Smoothed regression target per observed edge, in `[0.9, 1]`.
    pub tau: Vec<f64>,
    pub frozen: bool,
}

impl LatentState {
    pub fn initial(n_observed: usize) -> Self {
        LatentState {
            z: Array2::zeros((0, 0)),
            p_hat: Vec::new(),
            y_hat: Array2::zeros((0, 0)),
            mu: Array2::zeros((0, 0)),
            logvar: Array2::zeros((0, 0)),
            eps_x_sample: Array2::zeros((0, 0)),
            p_el: vec![1.0; n_observed],
            tau: vec![1.0; n_observed],
            frozen: false,
        }
    }

    /// Learned probabilities of the observed edges, in dataset order.
    pub fn p_hat_observed(&self, ctx: &GraphContext) -> Vec<f64> {
        ctx.obs_pos.iter().map(|&k| self.p_hat[k]).collect()
    }
}

/// Label smoothing of early-learning scores into `[0.9, 1]`.
pub fn tau_from_p_el(p_el: f64) -> f64 {
    0.9 + 0.1 * p_el.clamp(0.0, 1.0)
}

/// One moving-average step toward the current probabilities `p_c` while
/// `epoch <= early_epochs`; afterwards the buffers stay as they are.
/// Returns whether an update happened.
pub fn update_eps_a(state: &mut LatentState, p_c: &[f64], epoch: usize, hp: &HyperParams) -> Result<bool> {
    if p_c.len() != state.p_el.len() {
        return Err(Error::shape("update_eps_a", format!("{} scores for {} edges", p_c.len(), state.p_el.len())));
    }
    if epoch > hp.early_epochs {
        if !state.frozen {
            state.frozen = true;
        } else {
            log::debug!("structure-noise scores are frozen; update at epoch {epoch} ignored");
        }
        return Ok(false);
    }
    let xi = hp.xi_ema;
    for ((el, t), &c) in state.p_el.iter_mut().zip(state.tau.iter_mut()).zip(p_c) {
        *el = xi * *el + (1.0 - xi) * c;
        *t = tau_from_p_el(*el);
    }
    Ok(true)
}

/// Encoder outputs on the tape.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub x: Tensor,
    pub z: Tensor,
    pub p_hat: Tensor,
    pub y_hat: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct EpsX {
    pub mu: Tensor,
    pub logvar: Tensor,
    pub sample: Tensor,
}

/// Parameters plus fixed wiring.
#[derive(Clone, Debug)]
pub struct Model {
    pub hp: HyperParams,
    pub ablation: Ablation,
    pub params: ModelParams,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(ctx: &GraphContext, hp: HyperParams, ablation: Ablation, rng: &mut R) -> Result<Self> {
        hp.validate()?;
        let params = ModelParams::new(ctx.n_features, ctx.n_classes, &hp, ablation, rng);
        Ok(Model { hp, ablation, params })
    }

    /// Structure weight on the learned probability in the edge decoder.
    pub fn theta1(&self) -> f64 {
        if self.ablation.uses_feature_links() {
            self.hp.theta1_mix
        } else {
            1.0
        }
    }

    /// Clean-structure and clean-label encoders.
    pub fn encode<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        p: &[Tensor],
        ctx: &GraphContext,
        training: bool,
        rng: &mut R,
    ) -> Result<Encoded> {
        let drop = self.hp.dropout;
        let x = tape.constant(ctx.x.clone());
        let z = self.params.phi1.forward(tape, p, &ctx.obs_prop, x, drop, training, rng)?;
        let cos = tape.edge_cosine(z, ctx.cand_edges.clone())?;
        let p_hat = tape.relu(cos);
        let vals = tape.gcn_norm(ctx.cand_pattern.clone(), p_hat)?;
        let prop = Propagate::Weighted(ctx.cand_pattern.clone(), vals);
        let logits = self.params.phi3.forward(tape, p, &prop, x, drop, training, rng)?;
        let y_hat = tape.row_softmax(logits);
        Ok(Encoded { x, z, p_hat, y_hat })
    }

    fn y_input(&self, tape: &mut Tape, y_hat: Tensor) -> Tensor {
        if self.hp.detach_y {
            let v = tape.value(y_hat).clone();
            tape.constant(v)
        } else {
            y_hat
        }
    }

    /// Feature-noise encoder. With `noise = None` the sample is the mean.
    pub fn infer_eps_x(
        &self,
        tape: &mut Tape,
        p: &[Tensor],
        enc: &Encoded,
        noise: Option<&Array2<f64>>,
    ) -> Result<EpsX> {
        let y = self.y_input(tape, enc.y_hat);
        let input = if self.ablation.uses_feature_links() {
            tape.concat_cols(enc.x, y)?
        } else {
            y
        };
        let e = &self.params.phi21;
        let h = e.hidden.forward(tape, p, input)?;
        let h = tape.relu(h);
        let mu = e.mu.forward(tape, p, h)?;
        let lv = e.logvar.forward(tape, p, h)?;
        let logvar = tape.clamp(lv, -10.0, 10.0);
        let sample = match noise {
            None => mu,
            Some(eta) => {
                let half = tape.scale(logvar, 0.5);
                let sd = tape.exp(half);
                let jitter = tape.mul_const(sd, eta.clone())?;
                tape.add(mu, jitter)?
            }
        };
        Ok(EpsX { mu, logvar, sample })
    }

    /// All six objective terms and their weighted sum for one pass.
    #[allow(clippy::too_many_arguments)]
    pub fn losses(
        &self,
        tape: &mut Tape,
        p: &[Tensor],
        ctx: &GraphContext,
        enc: &Encoded,
        tau: &[f64],
        negatives: Rc<[Edge]>,
        noise: Option<&Array2<f64>>,
    ) -> Result<LossTerms> {
        let hp = &self.hp;
        let cls_enc = tape.masked_cross_entropy(enc.y_hat, &ctx.labels, &ctx.train_mask)?;

        let th1 = self.theta1();
        let p_obs = tape.gather_rows(enc.p_hat, ctx.obs_pos.clone())?;
        let scaled = tape.scale(p_obs, th1);
        let p_reg = tape.add_const(scaled, &(&ctx.feat_sim * (1.0 - th1)))?;
        let cos_neg = tape.edge_cosine(enc.z, negatives)?;
        let p_neg = tape.relu(cos_neg);
        let rec_edge = loss_rec_edge(tape, p_reg, tau, p_neg, ctx.n)?;

        let hom = loss_hom(tape, enc.y_hat, enc.p_hat, &ctx.cand_edges)?;

        let eps = self.infer_eps_x(tape, p, enc, noise)?;
        let y_in = self.y_input(tape, enc.y_hat);
        let dec_in = tape.concat_cols(eps.sample, y_in)?;
        let recon = self.params.theta2.forward(tape, p, dec_in, 0.0, false, &mut NoRng)?;
        let rec_feat = loss_rec_feat(tape, recon, &ctx.x_target, hp.feat_loss)?;

        let dec_logits = match &self.params.theta3 {
            LabelDecoder::Gcn(g) => {
                let input = tape.concat_cols(enc.x, y_in)?;
                g.forward(tape, p, &ctx.obs_prop, input, 0.0, false, &mut NoRng)?
            }
            LabelDecoder::Mlp(m) => m.forward(tape, p, y_in, 0.0, false, &mut NoRng)?,
        };
        let dec_probs = tape.row_softmax(dec_logits);
        let cls_dec = tape.masked_cross_entropy(dec_probs, &ctx.labels, &ctx.train_mask)?;

        let kl = tape.gaussian_kl(eps.mu, eps.logvar)?;
        let terms = [cls_enc, rec_edge, hom, rec_feat, cls_dec, kl];
        let total = total_loss(tape, &terms, hp);
        Ok(LossTerms {
            cls_enc,
            rec_edge,
            hom,
            rec_feat,
            cls_dec,
            kl,
            total,
            eps,
        })
    }

    /// Eval-mode pass: fills the inferred quantities of `state`.
    pub fn infer(&self, ctx: &GraphContext, state: &mut LatentState) -> Result<()> {
        let mut tape = Tape::new();
        let p = self.params.store.bind(&mut tape);
        let enc = self.encode(&mut tape, &p, ctx, false, &mut NoRng)?;
        let eps = self.infer_eps_x(&mut tape, &p, &enc, None)?;
        state.z = tape.value(enc.z).clone();
        state.p_hat = tape.value(enc.p_hat).iter().copied().collect();
        state.y_hat = tape.value(enc.y_hat).clone();
        state.mu = tape.value(eps.mu).clone();
        state.logvar = tape.value(eps.logvar).clone();
        state.eps_x_sample = tape.value(eps.sample).clone();
        Ok(())
    }
}

/// Standard-normal noise for the reparametrized sample.
pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Placeholder generator for passes that never drop units.
pub(crate) struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval-mode pass drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval-mode pass drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("eval-mode pass drew a random number")
    }
}
