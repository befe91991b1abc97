//! Graph datasets, adjacency normalization, γ-hop similarity and the
//! candidate graph over which edge probabilities are learned.

mod candidate;
mod io;
mod knn;
pub mod synthetic;

use std::collections::HashSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use candidate::{build_candidate_graph, CandidateGraph, Provenance};
pub use io::{load_dataset, save_dataset};
pub use knn::{build_knn, cosine, subgraph_embedding};

use crate::error::{Error, Result};
use crate::sparse::{Edge, SparseAdj, SparsePattern};

/// Node indices of each split, as stored in `splits.json`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

/// One experiment instance: features, undirected edges, labels and masks.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub features: Array2<f64>,
    /// Canonical `(low, high)` pairs in ascending order.
    pub edges: Vec<Edge>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl GraphDataset {
    /// Builds and validates a dataset. `edges` may be in any order and
    /// orientation; duplicates and self-loops are rejected.
    pub fn new(
        features: Array2<f64>,
        edges: Vec<Edge>,
        labels: Vec<usize>,
        n_classes: usize,
        splits: &Splits,
    ) -> Result<Self> {
        let n = features.nrows();
        let masks = |idx: &[usize], name: &str| -> Result<Vec<bool>> {
            let mut m = vec![false; n];
            for &i in idx {
                if i >= n {
                    return Err(Error::Validation(format!("{name} split node {i} >= {n}")));
                }
                if m[i] {
                    return Err(Error::Validation(format!("{name} split lists node {i} twice")));
                }
                m[i] = true;
            }
            Ok(m)
        };
        let ds = GraphDataset {
            features,
            edges: canonical_edges(edges)?,
            labels,
            n_classes,
            train_mask: masks(&splits.train, "train")?,
            val_mask: masks(&splits.val, "val")?,
            test_mask: masks(&splits.test, "test")?,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_nodes(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.labels.len() != n {
            return Err(Error::Validation(format!(
                "{} labels for {n} nodes",
                self.labels.len()
            )));
        }
        if let Some((i, &y)) = self.labels.iter().enumerate().find(|(_, &y)| y >= self.n_classes) {
            return Err(Error::Validation(format!(
                "label {y} of node {i} outside [0, {})",
                self.n_classes
            )));
        }
        for m in [&self.train_mask, &self.val_mask, &self.test_mask] {
            if m.len() != n {
                return Err(Error::Validation("mask length differs from node count".into()));
            }
        }
        for i in 0..n {
            let c = self.train_mask[i] as u8 + self.val_mask[i] as u8 + self.test_mask[i] as u8;
            if c > 1 {
                return Err(Error::Validation(format!("node {i} is in more than one split")));
            }
        }
        for w in self.edges.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Validation(format!("edge list not canonical at {:?}", w[1])));
            }
        }
        for &(u, v) in &self.edges {
            if u >= v || v >= n {
                return Err(Error::Validation(format!("invalid edge ({u}, {v})")));
            }
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        Ok(())
    }

    /// Train ∪ val, the nodes whose labels are observed.
    pub fn labeled_mask(&self) -> Vec<bool> {
        self.train_mask
            .iter()
            .zip(&self.val_mask)
            .map(|(&a, &b)| a || b)
            .collect()
    }

    pub fn splits(&self) -> Splits {
        let idx = |m: &[bool]| m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
        Splits {
            train: idx(&self.train_mask),
            val: idx(&self.val_mask),
            test: idx(&self.test_mask),
            num_classes: Some(self.n_classes),
        }
    }

    pub fn edge_set(&self) -> HashSet<Edge> {
        self.edges.iter().copied().collect()
    }

    /// Same nodes, features and labels over a different edge list.
    pub fn with_edges(&self, edges: Vec<Edge>) -> Result<Self> {
        let mut ds = self.clone();
        ds.edges = canonical_edges(edges)?;
        ds.validate()?;
        Ok(ds)
    }

    /// Symmetrically normalized observed adjacency with self-loops.
    pub fn normalized_adjacency(&self) -> Result<SparseAdj> {
        normalize_adj(&self.edges, &vec![1.0; self.n_edges()], self.n_nodes(), true)
    }
}

/// Sorts pairs into canonical orientation and order, rejecting self-loops
/// and duplicates.
pub fn canonical_edges(edges: Vec<Edge>) -> Result<Vec<Edge>> {
    let mut out: Vec<Edge> = edges.into_iter().map(|(a, b)| crate::sparse::edge(a, b)).collect();
    if let Some(&(u, _)) = out.iter().find(|(u, v)| u == v) {
        return Err(Error::Validation(format!("self-loop on node {u}")));
    }
    out.sort_unstable();
    if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Validation(format!("duplicate edge {:?}", w[0])));
    }
    Ok(out)
}

/// `D^{-1/2} (A + I) D^{-1/2}` (or without `I`) for a weighted undirected
/// edge list.
pub fn normalize_adj(edges: &[Edge], weights: &[f64], n: usize, self_loops: bool) -> Result<SparseAdj> {
    if weights.len() != edges.len() {
        return Err(Error::shape(
            "normalize_adj",
            format!("{} weights for {} edges", weights.len(), edges.len()),
        ));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::Invalid(format!("edge weight {w} must be finite and >= 0")));
    }
    let pattern = SparsePattern::from_edges(n, edges, self_loops)?;
    let values = pattern.normalized_values(weights);
    SparseAdj::from_pattern(&pattern, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn splits(train: &[usize], val: &[usize], test: &[usize]) -> Splits {
        Splits {
            train: train.to_vec(),
            val: val.to_vec(),
            test: test.to_vec(),
            num_classes: None,
        }
    }

    #[test]
    fn dataset_validation() {
        let x = Array2::<f64>::zeros((3, 2));
        let ok = GraphDataset::new(x.clone(), vec![(1, 0), (1, 2)], vec![0, 1, 0], 2, &splits(&[0], &[1], &[2]));
        assert_eq!(ok.unwrap().edges, vec![(0, 1), (1, 2)]);
        assert!(GraphDataset::new(x.clone(), vec![(0, 0)], vec![0; 3], 1, &Splits::default()).is_err());
        assert!(GraphDataset::new(x.clone(), vec![(0, 1), (1, 0)], vec![0; 3], 1, &Splits::default()).is_err());
        assert!(GraphDataset::new(x.clone(), vec![], vec![0, 3, 0], 2, &Splits::default()).is_err());
        assert!(GraphDataset::new(x, vec![], vec![0; 3], 1, &splits(&[0], &[0], &[])).is_err());
    }

    #[test]
    fn normalize_single_node_and_pair() {
        let a = normalize_adj(&[], &[], 1, true).unwrap();
        assert_eq!(a.to_dense(), array![[1.0]]);
        let a = normalize_adj(&[(0, 1)], &[1.0], 2, true).unwrap();
        assert_eq!(a.to_dense(), Array2::from_elem((2, 2), 0.5));
    }

    #[test]
    fn zero_weight_edge_is_inert() {
        let a = normalize_adj(&[(0, 1)], &[0.0], 2, true).unwrap();
        assert_eq!(a.to_dense(), Array2::<f64>::eye(2));
        assert!(normalize_adj(&[(0, 1)], &[-1.0], 2, true).is_err());
    }

    #[test]
    fn regular_graph_rows_sum_to_one() {
        // 6-cycle: every node has degree 2.
        let edges: Vec<Edge> = (0..6).map(|i| crate::sparse::edge(i, (i + 1) % 6)).collect();
        let a = normalize_adj(&edges, &[1.0; 6], 6, true).unwrap();
        for row in a.to_dense().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn normalized_adjacency_is_symmetric(
            raw in proptest::collection::vec((0usize..10, 0usize..10, 0.0f64..3.0), 0..30),
            loops in any::<bool>(),
        ) {
            let mut seen = HashSet::new();
            let mut edges = Vec::new();
            let mut weights = Vec::new();
            for (a, b, w) in raw {
                if a != b && seen.insert(crate::sparse::edge(a, b)) {
                    edges.push((a, b));
                    weights.push(w);
                }
            }
            let adj = normalize_adj(&edges, &weights, 10, loops).unwrap();
            prop_assert!(adj.is_symmetric());
            prop_assert!(adj.values().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
