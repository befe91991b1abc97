//! Saves a trained model, reloads it and checks inference is unchanged.

use dang_lab::dagnn::{load_checkpoint, save_checkpoint, Checkpoint, GraphContext, LatentState, Manifest};
use dang_lab::graph::synthetic::PlantedPartition;
use dang_lab::train::{train, TrainConfig};

fn main() -> dang_lab::Result<()> {
    let ds = PlantedPartition::default().generate(0)?;
    let cfg = TrainConfig { epochs: 60, ..TrainConfig::default() };
    let out = train(&ds, &cfg)?;

    let manifest = Manifest {
        n_nodes: ds.n_nodes(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes,
        n_observed_edges: ds.n_edges(),
        hp: cfg.hp.clone(),
        ablation: cfg.ablation,
        epoch: out.best_epoch,
        seed: cfg.seed,
        lr: cfg.lr,
        task: "node_classification".into(),
        split_seed: None,
        params: Vec::new(),
        buffers: Vec::new(),
    };
    let ck = Checkpoint::new(manifest, out.model.clone(), out.state.p_el.clone(), out.state.tau.clone());
    let path = std::env::temp_dir().join("dang_example.ckpt");
    save_checkpoint(&path, &ck)?;
    let back = load_checkpoint(&path)?;
    println!("{} bytes, {} tensors, epoch {}", std::fs::metadata(&path).map_or(0, |m| m.len()), back.manifest.params.len(), back.manifest.epoch);

    let ctx = GraphContext::new(&ds, &back.manifest.hp)?;
    let mut state = LatentState::initial(ds.n_edges());
    state.p_el = back.p_el.clone();
    state.tau = back.tau.clone();
    back.model.infer(&ctx, &mut state)?;
    let diff = state.y_hat.iter().zip(out.state.y_hat.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |y_hat difference| after reload: {diff:e}");
    Ok(())
}
