use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sparse::{edge, Edge, SparsePattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Observed,
    Knn,
    Both,
}

impl Provenance {
    pub fn is_observed(self) -> bool {
        matches!(self, Provenance::Observed | Provenance::Both)
    }
}

/// Union of observed and kNN pairs. Edge probabilities are learned per
/// entry of `edges`; `p_hat` holds the latest estimate.
#[derive(Clone, Debug)]
pub struct CandidateGraph {
    n: usize,
    edges: Vec<Edge>,
    provenance: Vec<Provenance>,
    index: HashMap<Edge, usize>,
    /// For each observed edge in input order, its position in `edges`.
    observed_pos: Vec<usize>,
    pub p_hat: Option<Vec<f64>>,
}

pub fn build_candidate_graph(n: usize, observed: &[Edge], knn: &[Edge]) -> CandidateGraph {
    let mut edges: Vec<Edge> = Vec::with_capacity(observed.len() + knn.len());
    let mut provenance = Vec::with_capacity(observed.len() + knn.len());
    let mut index: HashMap<Edge, usize> = HashMap::new();
    let mut observed_pos = Vec::with_capacity(observed.len());
    for &(a, b) in observed {
        let e = edge(a, b);
        let pos = *index.entry(e).or_insert_with(|| {
            edges.push(e);
            provenance.push(Provenance::Observed);
            edges.len() - 1
        });
        observed_pos.push(pos);
    }
    for &(a, b) in knn {
        let e = edge(a, b);
        match index.get(&e) {
            Some(&pos) => {
                if provenance[pos] == Provenance::Observed {
                    provenance[pos] = Provenance::Both;
                }
            }
            None => {
                index.insert(e, edges.len());
                edges.push(e);
                provenance.push(Provenance::Knn);
            }
        }
    }
    CandidateGraph {
        n,
        edges,
        provenance,
        index,
        observed_pos,
        p_hat: None,
    }
}

impl CandidateGraph {
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn position(&self, e: Edge) -> Option<usize> {
        self.index.get(&edge(e.0, e.1)).copied()
    }

    /// Candidate positions of the observed edges, in the order they were given.
    pub fn observed_positions(&self) -> &[usize] {
        &self.observed_pos
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }

    /// Edge layout with unit self-loops used to normalize learned weights.
    pub fn pattern(&self) -> Result<Rc<SparsePattern>> {
        SparsePattern::from_edges(self.n, &self.edges, true).map(Rc::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_sets_add() {
        let c = build_candidate_graph(5, &[(0, 1), (1, 2)], &[(3, 4), (0, 4)]);
        assert_eq!(c.len(), 4);
        assert_eq!(c.count(Provenance::Observed), 2);
        assert_eq!(c.count(Provenance::Knn), 2);
    }

    #[test]
    fn identical_sets_are_both() {
        let e = [(0, 1), (1, 2)];
        let c = build_candidate_graph(3, &e, &[(2, 1), (1, 0)]);
        assert_eq!(c.len(), 2);
        assert!(c.provenance().iter().all(|&p| p == Provenance::Both));
        assert_eq!(c.observed_positions(), &[0, 1]);
    }

    #[test]
    fn observed_always_retained() {
        let obs = [(2, 3), (0, 1)];
        let c = build_candidate_graph(4, &obs, &[(0, 2), (0, 1)]);
        for (k, &e) in obs.iter().enumerate() {
            assert_eq!(c.edges()[c.observed_positions()[k]], edge(e.0, e.1));
            assert!(c.provenance()[c.position(e).unwrap()].is_observed());
        }
        assert!(c.len() <= obs.len() + 4 * 1);
    }
}
