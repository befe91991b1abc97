use std::cmp::Ordering;
use std::collections::HashSet;

use ndarray::{s, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use super::normalize_adj;
use crate::error::{Error, Result};
use crate::sparse::{edge, Edge};

const KNN_CHUNK_ROWS: usize = 256;

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// `gamma` applications of the self-looped normalized adjacency to the
/// features; `gamma = 0` returns them unchanged.
pub fn subgraph_embedding(features: &Array2<f64>, edges: &[Edge], gamma: usize) -> Result<Array2<f64>> {
    let mut out = features.clone();
    if gamma == 0 {
        return Ok(out);
    }
    let adj = normalize_adj(edges, &vec![1.0; edges.len()], features.nrows(), true)?;
    for _ in 0..gamma {
        out = adj.matmul_dense(&out);
    }
    Ok(out)
}

fn unit_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut u = x.clone();
    for mut r in u.rows_mut() {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r /= n;
        }
    }
    u
}

/// Per-node top-`k` cosine neighbours, symmetrized by union. Pairs in
/// `exclude` are skipped during selection; ties go to the lower node index.
pub fn build_knn(embedding: &Array2<f64>, k: usize, exclude: &HashSet<Edge>) -> Result<Vec<Edge>> {
    let n = embedding.nrows();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k >= n {
        return Err(Error::Invalid(format!("k = {k} must be below the node count {n}")));
    }
    let unit = unit_rows(embedding);
    let starts: Vec<usize> = (0..n).step_by(KNN_CHUNK_ROWS).collect();
    let picked: Vec<Vec<Edge>> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + KNN_CHUNK_ROWS).min(n);
            let sims = unit.slice(s![start..end, ..]).dot(&unit.t());
            let mut out = Vec::with_capacity((end - start) * k);
            for (off, row) in sims.axis_iter(Axis(0)).enumerate() {
                let i = start + off;
                let mut cand: Vec<(f64, usize)> = row
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i && !exclude.contains(&edge(i, j)))
                    .map(|(j, &s)| (s, j))
                    .collect();
                let by_rank = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
                    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
                };
                let take = k.min(cand.len());
                if take < cand.len() {
                    cand.select_nth_unstable_by(take, by_rank);
                    cand.truncate(take);
                }
                out.extend(cand.into_iter().map(|(_, j)| edge(i, j)));
            }
            out
        })
        .collect();
    let mut edges: Vec<Edge> = picked.into_iter().flatten().collect();
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k_zero_and_too_large() {
        let x = Array2::eye(3);
        assert!(build_knn(&x, 0, &HashSet::new()).unwrap().is_empty());
        assert!(build_knn(&x, 3, &HashSet::new()).is_err());
    }

    #[test]
    fn hand_computed_three_nodes() {
        let x = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let e = build_knn(&x, 1, &HashSet::new()).unwrap();
        assert_eq!(e, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn identical_features_tie_break_to_lowest_index() {
        let x = Array2::ones((4, 3));
        let e = build_knn(&x, 1, &HashSet::new()).unwrap();
        assert_eq!(e, vec![(0, 1), (0, 2), (0, 3)]);
    }

    #[test]
    fn excluded_pairs_are_skipped() {
        let x = array![[1.0, 0.0], [1.0, 0.0], [0.9, 0.1], [0.0, 1.0]];
        let exclude: HashSet<Edge> = [(0, 1)].into_iter().collect();
        let e = build_knn(&x, 1, &exclude).unwrap();
        assert!(!e.contains(&(0, 1)));
        assert!(e.contains(&(0, 2)) && e.contains(&(1, 2)));
    }

    #[test]
    fn gamma_zero_is_identity_and_one_mixes() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(subgraph_embedding(&x, &[(0, 1)], 0).unwrap(), x);
        assert_eq!(subgraph_embedding(&x, &[(0, 1)], 1).unwrap(), Array2::from_elem((2, 2), 0.5));
        assert_eq!(subgraph_embedding(&x, &[], 1).unwrap(), x);
    }

    #[test]
    fn matches_brute_force_on_random_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40;
        let x = Array2::from_shape_simple_fn((n, 5), || rng.random_range(-1.0..1.0));
        let k = 3;
        let mut expected = HashSet::new();
        for i in 0..n {
            let mut c: Vec<(f64, usize)> =
                (0..n).filter(|&j| j != i).map(|j| (cosine(x.row(i), x.row(j)), j)).collect();
            c.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, j) in c.iter().take(k) {
                expected.insert(edge(i, j));
            }
        }
        let got: HashSet<Edge> = build_knn(&x, k, &HashSet::new()).unwrap().into_iter().collect();
        assert_eq!(got, expected);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn permutation_equivariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 20;
            let x = Array2::from_shape_simple_fn((n, 4), || rng.random_range(-1.0..1.0));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            // row perm[i] of the relabeled matrix is row i of the original
            let mut y = Array2::zeros((n, 4));
            for i in 0..n {
                y.row_mut(perm[i]).assign(&x.row(i));
            }
            let base: HashSet<Edge> = build_knn(&x, 2, &HashSet::new()).unwrap()
                .into_iter().map(|(a, b)| edge(perm[a], perm[b])).collect();
            let relabeled: HashSet<Edge> = build_knn(&y, 2, &HashSet::new()).unwrap().into_iter().collect();
            prop_assert_eq!(base, relabeled);
        }
    }
}
