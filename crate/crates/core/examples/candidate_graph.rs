//! Subgraph-similarity kNN on a planted-partition graph and the candidate
//! edge set the structure encoder scores.

use std::collections::HashSet;

use dang_lab::graph::{build_candidate_graph, build_knn, subgraph_embedding, Provenance};
use dang_lab::graph::synthetic::PlantedPartition;

fn main() -> dang_lab::Result<()> {
    let fx = PlantedPartition::default();
    let ds = fx.generate(0)?;
    for gamma in [0, 1, 2] {
        let emb = subgraph_embedding(&ds.features, &ds.edges, gamma)?;
        let knn = build_knn(&emb, 10, &HashSet::new())?;
        let same = knn.iter().filter(|&&(a, b)| fx.block_of(a) == fx.block_of(b)).count();
        let cand = build_candidate_graph(ds.n_nodes(), &ds.edges, &knn);
        println!(
            "gamma={gamma} knn={} intra-block={:.3} candidate={} (observed {}, knn {}, both {})",
            knn.len(),
            same as f64 / knn.len() as f64,
            cand.len(),
            cand.count(Provenance::Observed),
            cand.count(Provenance::Knn),
            cand.count(Provenance::Both),
        );
    }
    Ok(())
}
