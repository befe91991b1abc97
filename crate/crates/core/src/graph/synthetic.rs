//! Planted-partition fixtures with block-dependent binary features.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GraphDataset;
use crate::error::{Error, Result};
use crate::eval::split_nodes;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedPartition {
    pub n_nodes: usize,
    pub n_blocks: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub n_features: usize,
    /// Activation probability of a feature owned by the node's block.
    pub p_on: f64,
    /// Activation probability of every other feature.
    pub p_off: f64,
}

impl Default for PlantedPartition {
    fn default() -> Self {
        PlantedPartition {
            n_nodes: 300,
            n_blocks: 2,
            p_intra: 0.05,
            p_inter: 0.005,
            n_features: 16,
            p_on: 0.3,
            p_off: 0.05,
        }
    }
}

impl PlantedPartition {
    pub fn with_nodes(n_nodes: usize) -> Self {
        PlantedPartition {
            n_nodes,
            ..Self::default()
        }
    }

    /// Block of node `i`; blocks are contiguous index ranges.
    pub fn block_of(&self, i: usize) -> usize {
        i * self.n_blocks / self.n_nodes
    }

    /// Block owning feature `j`; features are split into equal ranges.
    pub fn feature_owner(&self, j: usize) -> usize {
        j * self.n_blocks / self.n_features
    }

    /// Samples the graph, features and a 10/10/80 split from one seed.
    pub fn generate(&self, seed: u64) -> Result<GraphDataset> {
        for (name, p) in [
            ("p_intra", self.p_intra),
            ("p_inter", self.p_inter),
            ("p_on", self.p_on),
            ("p_off", self.p_off),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("{name} must be in [0,1], got {p}")));
            }
        }
        if self.n_blocks == 0 || self.n_blocks > self.n_nodes || self.n_features < self.n_blocks {
            return Err(Error::Validation(format!(
                "need 1 <= n_blocks <= min(n_nodes, n_features), got {} blocks",
                self.n_blocks
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_nodes;
        let labels: Vec<usize> = (0..n).map(|i| self.block_of(i)).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if labels[i] == labels[j] { self.p_intra } else { self.p_inter };
                if rng.random_bool(p) {
                    edges.push((i, j));
                }
            }
        }
        let mut features = Array2::zeros((n, self.n_features));
        for i in 0..n {
            for j in 0..self.n_features {
                let p = if self.feature_owner(j) == labels[i] { self.p_on } else { self.p_off };
                if rng.random_bool(p) {
                    features[[i, j]] = 1.0;
                }
            }
        }
        let splits = split_nodes(n, seed.wrapping_add(1))?;
        GraphDataset::new(features, edges, labels, self.n_blocks, &splits)
    }
}
