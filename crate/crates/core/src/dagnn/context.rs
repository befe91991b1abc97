use std::collections::HashSet;
use std::rc::Rc;

use ndarray::Array2;

use super::HyperParams;
use crate::error::{Error, Result};
use crate::graph::{build_candidate_graph, build_knn, cosine, subgraph_embedding, CandidateGraph, GraphDataset};
use crate::nn::Propagate;
use crate::sparse::{Edge, SparsePattern};

/// Everything about one dataset that stays fixed across epochs: the
/// normalized observed adjacency, the candidate graph and index tables.
pub struct GraphContext {
    pub n: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub x: Array2<f64>,
    pub x_target: Rc<Array2<f64>>,
    pub labels: Vec<usize>,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub observed: Vec<Edge>,
    pub observed_set: HashSet<Edge>,
    pub obs_prop: Propagate,
    pub candidate: CandidateGraph,
    pub cand_pattern: Rc<SparsePattern>,
    pub cand_edges: Rc<[Edge]>,
    /// Candidate positions of `observed`, in order.
    pub obs_pos: Rc<[usize]>,
    /// Raw-feature cosine of each observed edge, `E×1`.
    pub feat_sim: Array2<f64>,
}

impl GraphContext {
    /// Builds the candidate graph from a `k_knn`-NN graph over the
    /// `gamma_hop` subgraph embedding of the observed features.
    pub fn new(ds: &GraphDataset, hp: &HyperParams) -> Result<Self> {
        let knn = if hp.k_knn == 0 {
            Vec::new()
        } else {
            let emb = subgraph_embedding(&ds.features, &ds.edges, hp.gamma_hop)?;
            build_knn(&emb, hp.k_knn, &HashSet::new())?
        };
        let candidate = build_candidate_graph(ds.n_nodes(), &ds.edges, &knn);
        Self::with_candidate(ds, candidate)
    }

    pub fn with_candidate(ds: &GraphDataset, candidate: CandidateGraph) -> Result<Self> {
        ds.validate()?;
        if candidate.n_nodes() != ds.n_nodes() || candidate.observed_positions().len() != ds.n_edges() {
            return Err(Error::Validation("candidate graph built from a different dataset".into()));
        }
        let cand_pattern = candidate.pattern()?;
        let feat_sim = Array2::from_shape_fn((ds.n_edges(), 1), |(e, _)| {
            let (a, b) = ds.edges[e];
            cosine(ds.features.row(a), ds.features.row(b))
        });
        Ok(GraphContext {
            n: ds.n_nodes(),
            n_features: ds.n_features(),
            n_classes: ds.n_classes,
            x: ds.features.clone(),
            x_target: Rc::new(ds.features.clone()),
            labels: ds.labels.clone(),
            train_mask: ds.train_mask.clone(),
            val_mask: ds.val_mask.clone(),
            test_mask: ds.test_mask.clone(),
            observed: ds.edges.clone(),
            observed_set: ds.edge_set(),
            obs_prop: Propagate::Fixed(Rc::new(ds.normalized_adjacency()?)),
            cand_edges: candidate.edges().into(),
            obs_pos: candidate.observed_positions().into(),
            cand_pattern,
            candidate,
            feat_sim,
        })
    }
}
