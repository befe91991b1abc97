//! Plain two-layer GCN on the observed graph, trained with the same
//! optimizer and stopping rule as the variational model.

use std::rc::Rc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::accuracy;
use crate::error::{Error, Result};
use crate::graph::GraphDataset;
use crate::nn::{Gcn2, Propagate};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            hidden: 64,
            dropout: 0.6,
            adam: AdamConfig::default(),
            epochs: 1000,
            patience: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Hidden-layer activations of the selected snapshot.
    pub embedding: Array2<f64>,
    pub probs: Array2<f64>,
}

pub fn gcn_baseline(ds: &GraphDataset, cfg: &BaselineConfig) -> Result<BaselineOutcome> {
    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    drop_rng.set_stream(1);
    let mut store = ParamStore::new();
    let gcn = Gcn2::new(&mut store, "gcn", (ds.n_features(), cfg.hidden, ds.n_classes), &mut init);
    let prop = Propagate::Fixed(Rc::new(ds.normalized_adjacency()?));
    let mut opt = Adam::new(cfg.adam, &store);

    // Eval-mode forward: (hidden activations, class probabilities).
    let infer = |store: &ParamStore, rng: &mut ChaCha8Rng| -> Result<(Array2<f64>, Array2<f64>)> {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.constant(ds.features.clone());
        let h = tape.matmul(x, p[gcn.l1.w.0])?;
        let h = prop.apply(&mut tape, h)?;
        let h = tape.add_row(h, p[gcn.l1.b.0])?;
        let h = tape.relu(h);
        let emb = tape.value(h).clone();
        let logits = gcn.forward(&mut tape, &p, &prop, x, cfg.dropout, false, rng)?;
        let probs = tape.row_softmax(logits);
        Ok((emb, tape.value(probs).clone()))
    };

    let (emb, probs) = infer(&store, &mut drop_rng)?;
    let mut best = BaselineOutcome {
        val_accuracy: f64::NEG_INFINITY,
        test_accuracy: f64::NAN,
        best_epoch: 0,
        epochs_run: 0,
        embedding: emb,
        probs,
    };
    for epoch in 1..=cfg.epochs {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let x = tape.constant(ds.features.clone());
        let logits = gcn.forward(&mut tape, &p, &prop, x, cfg.dropout, true, &mut drop_rng)?;
        let probs = tape.row_softmax(logits);
        let loss = tape.masked_cross_entropy(probs, &ds.labels, &ds.train_mask)?;
        if !tape.scalar(loss).is_finite() {
            return Err(Error::NonFiniteLoss {
                term: "cls".into(),
                epoch,
            });
        }
        tape.backward(loss)?;
        let grads = store.grads(&tape, &p);
        opt.step(&mut store, &grads)?;

        let (emb, probs) = infer(&store, &mut drop_rng)?;
        let val = accuracy(&probs, &ds.labels, &ds.val_mask)?;
        best.epochs_run = epoch;
        if val > best.val_accuracy {
            best.val_accuracy = val;
            best.test_accuracy = accuracy(&probs, &ds.labels, &ds.test_mask)?;
            best.best_epoch = epoch;
            best.embedding = emb;
            best.probs = probs;
        } else if epoch - best.best_epoch >= cfg.patience {
            break;
        }
    }
    Ok(best)
}
