//! Training loop with the early-learning schedule, validation-based model
//! selection and an exhaustive parallel grid search.

use std::path::Path;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dagnn::{standard_normal, update_eps_a, Ablation, GraphContext, HyperParams, LatentState, Model, TERM_NAMES};
use crate::error::{Error, Result};
use crate::eval::{accuracy, link_auc, sample_absent_pairs, EdgeSplit};
use crate::graph::GraphDataset;
use crate::sparse::Edge;
use crate::tensor::{Adam, AdamConfig, Tape};

/// Learning rates allowed under `strict_grid`.
pub const LR_GRID: [f64; 4] = [0.01, 0.005, 0.001, 0.0005];

/// Generator streams derived from the run seed.
pub const STREAM_INIT: u64 = 0;
pub const STREAM_DROPOUT: u64 = 1;
pub const STREAM_NEGATIVES: u64 = 2;
pub const STREAM_NOISE: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hp: HyperParams,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub lr: f64,
    pub strict_grid: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hp: HyperParams::default(),
            epochs: 1000,
            patience: 100,
            seed: 0,
            ablation: Ablation::Full,
            lr: 0.01,
            strict_grid: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Validation(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.strict_grid && !LR_GRID.contains(&self.lr) {
            return Err(Error::Validation(format!("lr {} is not one of {LR_GRID:?}", self.lr)));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.hp.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub total: f64,
    /// In [`TERM_NAMES`] order.
    pub terms: [f64; 6],
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub frozen: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<TrainRecord>,
}

impl TrainHistory {
    pub fn header() -> Vec<String> {
        let mut h = vec!["epoch".to_string(), "total".to_string()];
        h.extend(TERM_NAMES.iter().map(|s| s.to_string()));
        h.extend(["train_acc", "val_acc", "frozen"].map(String::from));
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::Validation(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(Self::header()).map_err(io)?;
        for r in &self.records {
            let mut row = vec![r.epoch.to_string(), r.total.to_string()];
            row.extend(r.terms.iter().map(f64::to_string));
            row.extend([r.train_accuracy.to_string(), r.val_accuracy.to_string(), r.frozen.to_string()]);
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.records.iter().map(|r| r.val_accuracy).reduce(f64::max)
    }
}

/// The snapshot with the best validation accuracy, and the full history.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Eval-mode latents of `model` plus the buffers as of `best_epoch`.
    pub state: LatentState,
    pub history: TrainHistory,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn train(ds: &GraphDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ctx = GraphContext::new(ds, &cfg.hp)?;
    train_in(&ctx, cfg)
}

/// Trains on a prebuilt context.
pub fn train_in(ctx: &GraphContext, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let hp = &cfg.hp;
    let mut model = Model::new(ctx, hp.clone(), cfg.ablation, &mut stream_rng(cfg.seed, STREAM_INIT))?;
    let mut drop_rng = stream_rng(cfg.seed, STREAM_DROPOUT);
    let mut neg_rng = stream_rng(cfg.seed, STREAM_NEGATIVES);
    let mut noise_rng = stream_rng(cfg.seed, STREAM_NOISE);
    let mut opt = Adam::new(cfg.adam(), &model.params.store);
    let mut state = LatentState::initial(ctx.observed.len());
    let mut history = TrainHistory::default();

    let score = |state: &LatentState, mask: &[bool]| accuracy(&state.y_hat, &ctx.labels, mask);
    model.infer(ctx, &mut state)?;
    let mut best = TrainOutcome {
        model: model.clone(),
        train_accuracy: score(&state, &ctx.train_mask)?,
        val_accuracy: score(&state, &ctx.val_mask)?,
        test_accuracy: score(&state, &ctx.test_mask)?,
        state: state.clone(),
        history: TrainHistory::default(),
        best_epoch: 0,
    };
    let mut best_val = f64::NEG_INFINITY;

    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let p = model.params.store.bind(&mut tape);
        let enc = model.encode(&mut tape, &p, ctx, true, &mut drop_rng)?;
        if cfg.ablation.uses_structure_noise() {
            let p_hat = tape.value(enc.p_hat);
            let p_c: Vec<f64> = ctx.obs_pos.iter().map(|&k| p_hat[[k, 0]]).collect();
            update_eps_a(&mut state, &p_c, epoch, hp)?;
        } else {
            state.frozen = epoch > hp.early_epochs;
        }
        let negatives: Rc<[Edge]> =
            sample_absent_pairs(ctx.n, &ctx.observed_set, ctx.observed.len(), &mut neg_rng)?.into();
        let noise = standard_normal(ctx.n, hp.d2, &mut noise_rng);
        let terms = model.losses(&mut tape, &p, ctx, &enc, &state.tau, negatives, Some(&noise))?;
        terms.check_finite(&tape, epoch)?;
        let total = tape.scalar(terms.total);
        let values = terms.values(&tape);
        tape.backward(terms.total)?;
        let grads = model.params.store.grads(&tape, &p);
        opt.step(&mut model.params.store, &grads)?;

        model.infer(ctx, &mut state)?;
        let val = score(&state, &ctx.val_mask)?;
        history.records.push(TrainRecord {
            epoch,
            total,
            terms: values,
            train_accuracy: score(&state, &ctx.train_mask)?,
            val_accuracy: val,
            frozen: state.frozen,
        });
        if val > best_val {
            best_val = val;
            best.model = model.clone();
            best.state = state.clone();
            best.best_epoch = epoch;
            best.train_accuracy = score(&state, &ctx.train_mask)?;
            best.val_accuracy = val;
            best.test_accuracy = score(&state, &ctx.test_mask)?;
        } else if epoch - best.best_epoch >= cfg.patience {
            log::debug!("early stop at epoch {epoch}, best {}", best.best_epoch);
            break;
        }
    }
    best.history = history;
    Ok(best)
}

/// Link prediction: trains on the training edges only and scores the
/// held-out edges against their negatives by embedding cosine.
#[derive(Clone, Debug)]
pub struct LinkOutcome {
    pub auc: f64,
    pub outcome: TrainOutcome,
}

pub fn train_links(ds: &GraphDataset, split: &EdgeSplit, cfg: &TrainConfig) -> Result<LinkOutcome> {
    let sub = ds.with_edges(split.train_edges.clone())?;
    let outcome = train(&sub, cfg)?;
    let auc = link_auc(&outcome.state.z, &split.test_edges, &split.test_negatives)?;
    Ok(LinkOutcome { auc, outcome })
}

/// Value lists per tuned knob. An empty list keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub lr: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub theta1_mix: Vec<f64>,
    pub k_knn: Vec<usize>,
    pub gamma_hop: Vec<usize>,
}

impl Grid {
    /// Full tuning ranges for every searched knob.
    pub fn full() -> Self {
        Grid {
            lr: LR_GRID.to_vec(),
            lambda1: vec![0.003, 0.03, 0.3, 3.0, 30.0],
            lambda2: vec![0.003, 0.03, 0.3],
            theta1_mix: vec![0.1, 0.2, 0.3],
            k_knn: vec![0, 10, 50, 100, 300],
            gamma_hop: vec![0, 1],
        }
    }

    /// Every combination in row-major order, `lr` varying slowest.
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        fn or<T: Copy>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &lr in &or(&self.lr, base.lr) {
            for &l1 in &or(&self.lambda1, base.hp.lambda1) {
                for &l2 in &or(&self.lambda2, base.hp.lambda2) {
                    for &t1 in &or(&self.theta1_mix, base.hp.theta1_mix) {
                        for &k in &or(&self.k_knn, base.hp.k_knn) {
                            for &g in &or(&self.gamma_hop, base.hp.gamma_hop) {
                                let mut c = base.clone();
                                c.lr = lr;
                                c.hp.lambda1 = l1;
                                c.hp.lambda2 = l2;
                                c.hp.theta1_mix = t1;
                                c.hp.k_knn = k;
                                c.hp.gamma_hop = g;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub config: TrainConfig,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

impl GridCell {
    pub fn run(index: usize, ds: &GraphDataset, config: TrainConfig) -> Self {
        match train(ds, &config) {
            Ok(o) => GridCell {
                index,
                config,
                val_accuracy: Some(o.val_accuracy),
                test_accuracy: Some(o.test_accuracy),
                best_epoch: Some(o.best_epoch),
                error: None,
            },
            Err(e) => GridCell {
                index,
                config,
                val_accuracy: None,
                test_accuracy: None,
                best_epoch: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    pub best: usize,
}

/// Index of the highest validation accuracy, earliest cell on ties.
pub fn best_cell(cells: &[GridCell]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for c in cells {
        if let Some(v) = c.val_accuracy {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((c.index, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Runs every cell with the base seed, in parallel on the current pool.
pub fn grid_search(ds: &GraphDataset, base: &TrainConfig, grid: &Grid) -> Result<GridReport> {
    let configs = grid.cells(base);
    let cells: Vec<GridCell> = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, c)| GridCell::run(i, ds, c))
        .collect();
    let best = best_cell(&cells).ok_or_else(|| {
        Error::Invalid(format!(
            "every grid cell failed; first error: {}",
            cells[0].error.as_deref().unwrap_or("none")
        ))
    })?;
    Ok(GridReport { cells, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic::PlantedPartition;
    use ndarray::Array2;

    fn small() -> TrainConfig {
        TrainConfig {
            hp: HyperParams {
                d1: 16,
                d2: 4,
                hidden_phi1: 16,
                hidden_phi3: 16,
                hidden_phi21: 8,
                hidden_theta2: 8,
                hidden_theta3: 8,
                k_knn: 3,
                ..HyperParams::default()
            },
            epochs: 40,
            patience: 100,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn fixture(n: usize) -> GraphDataset {
        PlantedPartition::with_nodes(n).generate(0).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let ds = fixture(60);
        let cfg = TrainConfig { epochs: 0, ..small() };
        let out = train(&ds, &cfg).unwrap();
        assert!(out.history.records.is_empty());
        assert_eq!(out.best_epoch, 0);
        let ctx = GraphContext::new(&ds, &cfg.hp).unwrap();
        let init = Model::new(&ctx, cfg.hp.clone(), cfg.ablation, &mut stream_rng(cfg.seed, STREAM_INIT)).unwrap();
        for ((_, _, a), (_, _, b)) in out.model.params.store.iter().zip(init.params.store.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let ds = fixture(60);
        let cfg = TrainConfig { epochs: 8, ..small() };
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.state, b.state);
        let c = train(&ds, &TrainConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.history.records.last().unwrap().total, c.history.records.last().unwrap().total);
    }

    #[test]
    fn buffers_freeze_after_early_phase() {
        let ds = fixture(60);
        let mut cfg = TrainConfig { epochs: 36, ..small() };
        cfg.hp.early_epochs = 30;
        let ctx = GraphContext::new(&ds, &cfg.hp).unwrap();

        let hist = train_in(&ctx, &cfg).unwrap().history;
        for r in &hist.records {
            assert_eq!(r.frozen, r.epoch > 30, "epoch {}", r.epoch);
        }
        // Buffers at the end of epoch 30 equal those at epoch 36.
        let end30 = buffers_after(&ctx, &cfg, 30);
        let end36 = buffers_after(&ctx, &cfg, 36);
        assert_eq!(end30, end36);
        assert!(end30.0.iter().any(|&v| v < 1.0));
        assert!(end30.1.iter().all(|&t| (0.9..=1.0).contains(&t)));
    }

    /// Replays the loop's buffer schedule with validation selection off.
    fn buffers_after(ctx: &GraphContext, cfg: &TrainConfig, epochs: usize) -> (Vec<f64>, Vec<f64>) {
        let c = cfg;
        let mut model = Model::new(ctx, c.hp.clone(), c.ablation, &mut stream_rng(c.seed, STREAM_INIT)).unwrap();
        let mut drop_rng = stream_rng(c.seed, STREAM_DROPOUT);
        let mut neg_rng = stream_rng(c.seed, STREAM_NEGATIVES);
        let mut noise_rng = stream_rng(c.seed, STREAM_NOISE);
        let mut opt = Adam::new(c.adam(), &model.params.store);
        let mut state = LatentState::initial(ctx.observed.len());
        for epoch in 1..=epochs {
            let mut tape = Tape::new();
            let p = model.params.store.bind(&mut tape);
            let enc = model.encode(&mut tape, &p, ctx, true, &mut drop_rng).unwrap();
            let p_hat = tape.value(enc.p_hat);
            let p_c: Vec<f64> = ctx.obs_pos.iter().map(|&k| p_hat[[k, 0]]).collect();
            update_eps_a(&mut state, &p_c, epoch, &c.hp).unwrap();
            let negs: Rc<[Edge]> =
                sample_absent_pairs(ctx.n, &ctx.observed_set, ctx.observed.len(), &mut neg_rng).unwrap().into();
            let noise = standard_normal(ctx.n, c.hp.d2, &mut noise_rng);
            let t = model.losses(&mut tape, &p, ctx, &enc, &state.tau, negs, Some(&noise)).unwrap();
            tape.backward(t.total).unwrap();
            let g = model.params.store.grads(&tape, &p);
            opt.step(&mut model.params.store, &g).unwrap();
        }
        (state.p_el, state.tau)
    }

    #[test]
    fn loop_matches_manual_schedule() {
        // The selected snapshot at the last epoch must carry the same buffers
        // as an independent replay of the schedule.
        let ds = fixture(60);
        let cfg = TrainConfig { epochs: 5, ..small() };
        let ctx = GraphContext::new(&ds, &cfg.hp).unwrap();
        let out = train_in(&ctx, &cfg).unwrap();
        let (p_el, tau) = buffers_after(&ctx, &cfg, out.best_epoch);
        assert_eq!(out.state.p_el, p_el);
        assert_eq!(out.state.tau, tau);
    }

    #[test]
    fn case1_keeps_unit_targets() {
        let ds = fixture(60);
        let cfg = TrainConfig { epochs: 12, ablation: Ablation::Case1, ..small() };
        let out = train(&ds, &cfg).unwrap();
        assert!(out.state.tau.iter().all(|&t| t == 1.0));
        assert!(out.state.p_el.iter().all(|&t| t == 1.0));
    }

    #[test]
    fn zero_coefficients_reduce_to_weighted_gcn_classifier() {
        let ds = fixture(60);
        let mut cfg = TrainConfig { epochs: 10, ..small() };
        cfg.hp.lambda1 = 0.0;
        cfg.hp.lambda2 = 0.0;
        cfg.hp.lambda3 = 0.0;
        let ctx = GraphContext::new(&ds, &cfg.hp).unwrap();
        let out = train_in(&ctx, &cfg).unwrap();

        // Plain classifier: same initial weights, same dropout stream, only
        // the encoder's cross-entropy.
        let mut model = Model::new(&ctx, cfg.hp.clone(), cfg.ablation, &mut stream_rng(cfg.seed, STREAM_INIT)).unwrap();
        let mut drop_rng = stream_rng(cfg.seed, STREAM_DROPOUT);
        let mut opt = Adam::new(cfg.adam(), &model.params.store);
        for rec in &out.history.records {
            let mut tape = Tape::new();
            let p = model.params.store.bind(&mut tape);
            let enc = model.encode(&mut tape, &p, &ctx, true, &mut drop_rng).unwrap();
            let loss = tape.masked_cross_entropy(enc.y_hat, &ctx.labels, &ctx.train_mask).unwrap();
            assert_eq!(tape.scalar(loss), rec.total, "epoch {}", rec.epoch);
            tape.backward(loss).unwrap();
            let g: Vec<Option<Array2<f64>>> = model
                .params
                .store
                .grads(&tape, &p)
                .into_iter()
                .zip(model.params.store.iter())
                .map(|(g, (_, _, v))| Some(g.unwrap_or_else(|| Array2::zeros(v.dim()))))
                .collect();
            opt.step(&mut model.params.store, &g).unwrap();
        }
    }

    #[test]
    fn model_selection_picks_history_maximum() {
        let ds = fixture(80);
        let cfg = TrainConfig { epochs: 30, ..small() };
        let out = train(&ds, &cfg).unwrap();
        let max = out.history.best_val_accuracy().unwrap();
        assert_eq!(out.val_accuracy, max);
        let first = out.history.records.iter().find(|r| r.val_accuracy == max).unwrap();
        assert_eq!(first.epoch, out.best_epoch);
        assert!(out.history.records.iter().all(|r| r.total.is_finite()));
    }

    #[test]
    fn learns_separable_fixture() {
        let ds = PlantedPartition::with_nodes(200).generate(0).unwrap();
        let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
        let out = train(&ds, &cfg).unwrap();
        assert!(out.val_accuracy > 0.9, "val {}", out.val_accuracy);
    }

    #[test]
    fn history_csv_layout() {
        let ds = fixture(60);
        let out = train(&ds, &TrainConfig { epochs: 3, ..small() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        out.history.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,total,cls_enc,rec_edge,hom,rec_feat,cls_dec,kl,train_acc,val_acc,frozen");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn strict_grid_rejects_other_rates() {
        let cfg = TrainConfig { lr: 0.02, strict_grid: true, ..TrainConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
        assert!(TrainConfig { strict_grid: false, ..cfg }.validate().is_ok());
    }

    #[test]
    fn grid_cells_and_tie_break() {
        let base = small();
        let g = Grid { lr: vec![0.01, 0.001], lambda1: vec![0.3, 3.0], ..Grid::default() };
        let cells = g.cells(&base);
        assert_eq!(cells.len(), 4);
        assert_eq!((cells[1].lr, cells[1].hp.lambda1), (0.01, 3.0));
        assert_eq!(cells[2].hp.k_knn, base.hp.k_knn);

        let mk = |i, v| GridCell { index: i, config: base.clone(), val_accuracy: v, test_accuracy: None, best_epoch: None, error: None };
        assert_eq!(best_cell(&[mk(0, Some(0.5)), mk(1, Some(0.7)), mk(2, Some(0.7))]), Some(1));
        assert_eq!(best_cell(&[mk(0, None), mk(1, Some(0.1))]), Some(1));
        assert_eq!(best_cell(&[mk(0, None)]), None);

        let p = Grid::full().cells(&base);
        assert!(p.iter().any(|c| c.lr == 0.01
            && c.hp.lambda1 == 0.003
            && c.hp.lambda2 == 0.003
            && c.hp.theta1_mix == 0.1
            && c.hp.k_knn == 300
            && c.hp.gamma_hop == 1));
    }

    #[test]
    fn grid_search_prefers_working_rate() {
        let ds = fixture(80);
        let base = TrainConfig { epochs: 30, ..small() };
        let single = grid_search(&ds, &base, &Grid::default()).unwrap();
        assert_eq!(single.cells.len(), 1);
        assert_eq!(single.best, 0);

        let g = Grid { lr: vec![0.0, 0.01], ..Grid::default() };
        let r = grid_search(&ds, &base, &g).unwrap();
        assert_eq!(r.best, 1, "{:?}", r.cells.iter().map(|c| c.val_accuracy).collect::<Vec<_>>());
        let rev = grid_search(&ds, &base, &Grid { lr: vec![0.01, 0.0], ..Grid::default() }).unwrap();
        assert_eq!(rev.cells[rev.best].config.lr, 0.01);
    }

    #[test]
    fn link_training_uses_train_edges_only() {
        let ds = fixture(120);
        let split = crate::eval::split_edges(ds.n_nodes(), &ds.edges, 1).unwrap();
        let out = train_links(&ds, &split, &TrainConfig { epochs: 20, ..small() }).unwrap();
        assert!((0.0..=1.0).contains(&out.auc));
        assert_eq!(out.outcome.state.p_el.len(), split.train_edges.len());
    }
}
