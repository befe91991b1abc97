//! Single-file parameter checkpoint:
//! magic, `u64` LE manifest length, JSON manifest, then row-major LE `f64`
//! blobs for every parameter and buffer in manifest order.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Ablation, HyperParams, Model, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DANGCKP1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub n_observed_edges: usize,
    pub hp: HyperParams,
    pub ablation: Ablation,
    /// Epoch of the selected snapshot.
    pub epoch: usize,
    pub seed: u64,
    pub lr: f64,
    pub task: String,
    pub split_seed: Option<u64>,
    pub params: Vec<TensorEntry>,
    pub buffers: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: Model,
    pub p_el: Vec<f64>,
    pub tau: Vec<f64>,
}

impl Checkpoint {
    /// Fills the tensor tables of `manifest` from the model and buffers.
    pub fn new(mut manifest: Manifest, model: Model, p_el: Vec<f64>, tau: Vec<f64>) -> Self {
        manifest.params = model
            .params
            .store
            .iter()
            .map(|(_, name, v)| TensorEntry {
                name: name.to_string(),
                shape: [v.nrows(), v.ncols()],
            })
            .collect();
        manifest.buffers = vec![
            TensorEntry { name: "p_el".into(), shape: [p_el.len(), 1] },
            TensorEntry { name: "tau".into(), shape: [tau.len(), 1] },
        ];
        manifest.hp = model.hp.clone();
        manifest.ablation = model.ablation;
        Checkpoint { manifest, model, p_el, tau }
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let manifest = serde_json::to_vec(&ck.manifest)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    buf.extend_from_slice(&manifest);
    for (_, _, v) in ck.model.params.store.iter() {
        for x in v.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    for x in ck.p_el.iter().chain(&ck.tau) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Validation(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + mlen).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(body)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = ModelParams::new(manifest.n_features, manifest.n_classes, &manifest.hp, manifest.ablation, &mut rng);
    let layout: Vec<TensorEntry> = params
        .store
        .iter()
        .map(|(_, n, v)| TensorEntry { name: n.to_string(), shape: [v.nrows(), v.ncols()] })
        .collect();
    if layout != manifest.params {
        return Err(bad("parameter layout does not match the recorded hyperparameters"));
    }
    let mut floats = bytes[16 + mlen..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let expected: usize = manifest.params.iter().chain(&manifest.buffers).map(|t| t.shape[0] * t.shape[1]).sum();
    if (bytes.len() - 16 - mlen) != expected * 8 {
        return Err(bad("blob length does not match the manifest"));
    }
    for (k, entry) in manifest.params.iter().enumerate() {
        let vals: Vec<f64> = floats.by_ref().take(entry.shape[0] * entry.shape[1]).collect();
        *params.store.get_mut(crate::tensor::ParamId(k)) =
            Array2::from_shape_vec((entry.shape[0], entry.shape[1]), vals).expect("length checked");
    }
    let mut buffer = |name: &str| -> Result<Vec<f64>> {
        let e = manifest.buffers.iter().find(|b| b.name == name).ok_or_else(|| bad("missing buffer"))?;
        Ok(floats.by_ref().take(e.shape[0] * e.shape[1]).collect())
    };
    let p_el = buffer("p_el")?;
    let tau = buffer("tau")?;
    let model = Model {
        hp: manifest.hp.clone(),
        ablation: manifest.ablation,
        params,
    };
    Ok(Checkpoint { manifest, model, p_el, tau })
}
