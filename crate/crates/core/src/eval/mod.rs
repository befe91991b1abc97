//! Splits, node and link metrics, rank-sum diagnostics, the plain GCN
//! reference and result files.

mod baseline;
mod results;
mod stats;

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{gcn_baseline, BaselineConfig, BaselineOutcome};
pub use results::{aggregate, append_results, read_results, write_summary, CellSummary, ResultRow, RESULTS_HEADER};
pub use stats::{mann_whitney, separation_stats, MannWhitney, RankTest, SeparationReport, SeparationStats, EXACT_MAX};

use crate::error::{Error, Result};
use crate::graph::{cosine, Splits};
use crate::sparse::{edge, Edge};

/// Uniform 10/10/80 node split.
pub fn split_nodes(n: usize, seed: u64) -> Result<Splits> {
    if n < 10 {
        return Err(Error::Invalid(format!("need at least 10 nodes to split, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = n / 10;
    let part = |r: std::ops::Range<usize>| {
        let mut v = perm[r].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Splits {
        train: part(0..k),
        val: part(k..2 * k),
        test: part(2 * k..n),
        num_classes: None,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train_edges: Vec<Edge>,
    pub test_edges: Vec<Edge>,
    /// Absent pairs, one per test edge.
    pub test_negatives: Vec<Edge>,
}

/// Draws `count` distinct unordered pairs over `n` nodes, none in `taken`.
pub fn sample_absent_pairs<R: Rng + ?Sized>(
    n: usize,
    taken: &HashSet<Edge>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Edge>> {
    let total = n * n.saturating_sub(1) / 2;
    let free = total.saturating_sub(taken.len());
    if count > free {
        return Err(Error::Invalid(format!(
            "requested {count} absent pairs but only {free} exist"
        )));
    }
    let mut seen: HashSet<Edge> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    // Rejection sampling while the free space is not nearly exhausted,
    // otherwise enumerate and shuffle.
    if free >= 2 * count {
        while out.len() < count {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            let e = edge(a, b);
            if !taken.contains(&e) && seen.insert(e) {
                out.push(e);
            }
        }
    } else {
        let mut all: Vec<Edge> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|e| !taken.contains(e))
            .collect();
        all.shuffle(rng);
        all.truncate(count);
        out = all;
    }
    Ok(out)
}

/// 7:3 split of the observed edges with 1:1 negatives for the test part.
pub fn split_edges(n: usize, edges: &[Edge], seed: u64) -> Result<EdgeSplit> {
    if edges.len() < 10 {
        return Err(Error::Invalid(format!(
            "need at least 10 edges to split, got {}",
            edges.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<Edge> = edges.iter().map(|&(a, b)| edge(a, b)).collect();
    shuffled.sort_unstable();
    shuffled.shuffle(&mut rng);
    let n_train = (edges.len() * 7 + 5) / 10;
    let mut train_edges = shuffled[..n_train].to_vec();
    let mut test_edges = shuffled[n_train..].to_vec();
    train_edges.sort_unstable();
    test_edges.sort_unstable();
    let taken: HashSet<Edge> = shuffled.iter().copied().collect();
    let test_negatives = sample_absent_pairs(n, &taken, test_edges.len(), &mut rng)?;
    Ok(EdgeSplit {
        train_edges,
        test_edges,
        test_negatives,
    })
}

/// Row argmax with ties to the lowest index.
pub fn argmax_rows(y: ArrayView2<f64>) -> Vec<usize> {
    y.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn accuracy(y_hat: &Array2<f64>, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if labels.len() != y_hat.nrows() || mask.len() != y_hat.nrows() {
        return Err(Error::shape("accuracy", "labels/mask length differs from rows"));
    }
    let pred = argmax_rows(y_hat.view());
    let (mut hit, mut tot) = (0usize, 0usize);
    for i in 0..labels.len() {
        if mask[i] {
            tot += 1;
            hit += (pred[i] == labels[i]) as usize;
        }
    }
    if tot == 0 {
        return Err(Error::Invalid("accuracy mask selects no nodes".into()));
    }
    Ok(hit as f64 / tot as f64)
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank-based area under the ROC curve; ties count one half.
pub fn roc_auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::shape("roc_auc", "scores and labels differ in length"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("link score {s}")));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Invalid("roc_auc needs both positives and negatives".into()));
    }
    let ranks = average_ranks(scores);
    let r_pos: f64 = ranks.iter().zip(positives).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = r_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos * n_neg) as f64)
}

/// Cosine similarity between embedding rows of each pair.
pub fn score_links(z: &Array2<f64>, pairs: &[Edge]) -> Result<Vec<f64>> {
    if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a >= z.nrows() || b >= z.nrows()) {
        return Err(Error::shape("score_links", format!("pair ({a}, {b}) for {} rows", z.nrows())));
    }
    Ok(pairs.iter().map(|&(a, b)| cosine(z.row(a), z.row(b))).collect())
}

/// ROC-AUC of cosine scores on positives against negatives.
pub fn link_auc(z: &Array2<f64>, positives: &[Edge], negatives: &[Edge]) -> Result<f64> {
    let mut scores = score_links(z, positives)?;
    scores.extend(score_links(z, negatives)?);
    let mut labels = vec![true; positives.len()];
    labels.extend(std::iter::repeat_n(false, negatives.len()));
    roc_auc(&scores, &labels)
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl RunSummary {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        RunSummary { values, mean, std }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn node_split_sizes_and_determinism() {
        let s = split_nodes(100, 5).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (10, 10, 80));
        assert_eq!(s, split_nodes(100, 5).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(split_nodes(9, 0).is_err());
    }

    #[test]
    fn edge_split_sizes_and_negatives() {
        let edges: Vec<Edge> = (0..100).map(|i| (i, i + 1)).collect();
        let s = split_edges(101, &edges, 3).unwrap();
        assert_eq!((s.train_edges.len(), s.test_edges.len(), s.test_negatives.len()), (70, 30, 30));
        let e: HashSet<Edge> = edges.iter().copied().collect();
        assert!(s.test_negatives.iter().all(|p| !e.contains(p) && p.0 < p.1));
        let mut union: Vec<Edge> = s.train_edges.iter().chain(&s.test_edges).copied().collect();
        union.sort_unstable();
        assert_eq!(union, edges);
        assert_eq!(s, split_edges(101, &edges, 3).unwrap());
    }

    #[test]
    fn edge_split_too_dense() {
        // K5 has 10 edges and no absent pairs.
        let k5: Vec<Edge> = (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))).collect();
        assert!(split_edges(5, &k5, 0).is_err());
    }

    #[test]
    fn absent_pairs_dense_fallback() {
        let taken: HashSet<Edge> = [(0, 1), (0, 2)].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut got = sample_absent_pairs(4, &taken, 4, &mut rng).unwrap();
        got.sort_unstable();
        assert_eq!(got, vec![(0, 3), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn accuracy_cases() {
        let y = array![[0.9, 0.1], [0.2, 0.8]];
        assert_eq!(accuracy(&y, &[0, 1], &[true, true]).unwrap(), 1.0);
        let u = Array2::from_elem((3, 4), 0.25);
        assert_eq!(accuracy(&u, &[0, 0, 0], &[true; 3]).unwrap(), 1.0);
        assert!(accuracy(&u, &[0, 0, 0], &[false; 3]).is_err());
        let mut y = Array2::zeros((10, 2));
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        for i in 0..10 {
            let c = if i < 7 { labels[i] } else { 1 - labels[i] };
            y[[i, c]] = 1.0;
        }
        assert!((accuracy(&y, &labels, &[true; 10]).unwrap() - 0.7).abs() < 1e-15);
    }

    fn brute_auc(scores: &[f64], pos: &[bool]) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if pos[i] && !pos[j] {
                    c += 1.0;
                    s += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        s / c
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap(), 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn link_scores() {
        let z = array![[1.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let s = score_links(&z, &[(0, 1), (0, 2)]).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15 && s[1].abs() < 1e-15);
    }

    #[test]
    fn summary_mean_std() {
        let s = RunSummary::new(vec![1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(RunSummary::new(vec![4.0]).std, 0.0);
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force(
            data in proptest::collection::vec((0u8..6, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
            let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(pos.iter().any(|&p| p) && pos.iter().any(|&p| !p));
            let a = roc_auc(&scores, &pos).unwrap();
            prop_assert!((a - brute_auc(&scores, &pos)).abs() < 1e-12);
            let t: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp()).collect();
            prop_assert!((roc_auc(&t, &pos).unwrap() - a).abs() < 1e-12);
        }

        #[test]
        fn accuracy_argmax_invariant(
            vals in proptest::collection::vec(-3.0f64..3.0, 12),
            labels in proptest::collection::vec(0usize..3, 4),
        ) {
            let y = Array2::from_shape_vec((4, 3), vals).unwrap();
            let t = y.mapv(|v| v.exp() * 2.0 + 1.0);
            let m = [true; 4];
            prop_assert_eq!(accuracy(&y, &labels, &m).unwrap(), accuracy(&t, &labels, &m).unwrap());
        }
    }
}
