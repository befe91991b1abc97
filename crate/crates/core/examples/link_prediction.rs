//! 7:3 edge split, training on the kept edges, cosine scoring of held-out
//! edges against sampled absent pairs.

use dang_lab::eval::{link_auc, split_edges};
use dang_lab::graph::synthetic::PlantedPartition;
use dang_lab::train::{train_links, TrainConfig};

fn main() -> dang_lab::Result<()> {
    for seed in 0..3 {
        let ds = PlantedPartition::default().generate(seed)?;
        let split = split_edges(ds.n_nodes(), &ds.edges, seed)?;
        let out = train_links(&ds, &split, &TrainConfig { seed, ..TrainConfig::default() })?;
        // Raw features as a reference scorer.
        let raw = link_auc(&ds.features, &split.test_edges, &split.test_negatives)?;
        println!(
            "seed {seed}: train {} test {} auc {:.3} (raw features {:.3})",
            split.train_edges.len(),
            split.test_edges.len(),
            out.auc,
            raw
        );
    }
    Ok(())
}
