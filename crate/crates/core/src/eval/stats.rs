use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::average_ranks;
use crate::error::{Error, Result};
use crate::sparse::{edge, Edge};

/// Largest pooled sample size for which [`RankTest::Auto`] uses the exact
/// permutation distribution.
pub const EXACT_MAX: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankTest {
    #[default]
    Auto,
    Normal,
    Exact,
}

/// Rank-sum comparison of sample `x` against sample `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Number of (x, y) pairs with x > y, ties counting one half.
    pub u: f64,
    pub rank_sum_x: f64,
    /// Standardized `u`; 0 when every value is tied.
    pub z: f64,
    pub p_two_sided: f64,
    /// Evidence that `x` tends to be smaller than `y`.
    pub p_less: f64,
    pub exact: bool,
}

pub fn mann_whitney(x: &[f64], y: &[f64], mode: RankTest) -> Result<MannWhitney> {
    let (n1, n2) = (x.len(), y.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::Invalid("rank-sum test needs two nonempty samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank-sum sample".into()));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_x: f64 = ranks[..n1].iter().sum();
    let base = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = rank_sum_x - base;
    let n = (n1 + n2) as f64;
    let mu = (n1 * n2) as f64 / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        tie_term += (j * j * j - j) as f64;
        i += j;
    }
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    let sd = var.max(0.0).sqrt();
    let z = if sd > 0.0 { (u - mu) / sd } else { 0.0 };

    let exact = match mode {
        RankTest::Exact => true,
        RankTest::Normal => false,
        RankTest::Auto => n1 + n2 <= EXACT_MAX,
    };
    let (p_less, p_greater) = if exact {
        exact_tails(&ranks, n1, rank_sum_x)
    } else if sd == 0.0 {
        (1.0, 1.0)
    } else {
        let phi = Normal::standard();
        (phi.cdf((u - mu + 0.5) / sd), phi.cdf(-(u - mu - 0.5) / sd))
    };
    Ok(MannWhitney {
        u,
        rank_sum_x,
        z,
        p_two_sided: (2.0 * p_less.min(p_greater)).min(1.0),
        p_less: p_less.min(1.0),
        exact,
    })
}

/// `P(R <= r)` and `P(R >= r)` for the rank sum `R` of a uniformly random
/// size-`k` subset of the pooled ranks.
fn exact_tails(ranks: &[f64], k: usize, r: f64) -> (f64, f64) {
    // Doubled ranks are integers even with ties.
    let dr: Vec<usize> = ranks.iter().map(|&v| (2.0 * v).round() as usize).collect();
    let max_sum: usize = dr.iter().sum();
    let mut dp = vec![vec![0.0f64; max_sum + 1]; k + 1];
    dp[0][0] = 1.0;
    for &w in &dr {
        for c in (1..=k).rev() {
            for s in (w..=max_sum).rev() {
                let add = dp[c - 1][s - w];
                if add != 0.0 {
                    dp[c][s] += add;
                }
            }
        }
    }
    let total: f64 = dp[k].iter().sum();
    let target = (2.0 * r).round() as usize;
    let le: f64 = dp[k][..=target.min(max_sum)].iter().sum();
    let ge: f64 = dp[k][target.min(max_sum + 1)..].iter().sum();
    (le / total, ge / total)
}

/// Group comparison of scores on injected versus original observed edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationStats {
    pub n_noisy: usize,
    pub n_clean: usize,
    pub mean_noisy: f64,
    pub mean_clean: f64,
    /// `mean_clean - mean_noisy`.
    pub gap: f64,
    /// Noisy scores tested against clean scores.
    pub test: MannWhitney,
}

pub fn separation_stats(noisy: &[f64], clean: &[f64]) -> Result<SeparationStats> {
    let test = mann_whitney(noisy, clean, RankTest::Auto)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mean_noisy, mean_clean) = (mean(noisy), mean(clean));
    Ok(SeparationStats {
        n_noisy: noisy.len(),
        n_clean: clean.len(),
        mean_noisy,
        mean_clean,
        gap: mean_clean - mean_noisy,
        test,
    })
}

/// Separation of learned edge probabilities and early-learning scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub p_hat: SeparationStats,
    pub p_el: SeparationStats,
}

impl SeparationReport {
    /// `edges` are the observed edges, aligned with `p_hat` and `p_el`;
    /// those in `injected` form the noisy group.
    pub fn new(edges: &[Edge], p_hat: &[f64], p_el: &[f64], injected: &HashSet<Edge>) -> Result<Self> {
        if p_hat.len() != edges.len() || p_el.len() != edges.len() {
            return Err(Error::shape("separation_report", "scores not aligned with edges"));
        }
        let split = |vals: &[f64]| {
            let (mut noisy, mut clean) = (Vec::new(), Vec::new());
            for (&(a, b), &v) in edges.iter().zip(vals) {
                if injected.contains(&edge(a, b)) {
                    noisy.push(v);
                } else {
                    clean.push(v);
                }
            }
            (noisy, clean)
        };
        let (hn, hc) = split(p_hat);
        let (en, ec) = split(p_el);
        Ok(SeparationReport {
            p_hat: separation_stats(&hn, &hc)?,
            p_el: separation_stats(&en, &ec)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fraction of all size-|x| relabelings with rank-sum <= / >= observed.
    fn brute_tails(x: &[f64], y: &[f64]) -> (f64, f64) {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        let ranks = average_ranks(&pooled);
        let obs: f64 = ranks[..x.len()].iter().sum();
        let n = pooled.len();
        let (mut le, mut ge, mut tot) = (0.0, 0.0, 0.0);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != x.len() {
                continue;
            }
            let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            tot += 1.0;
            le += (s <= obs + 1e-9) as u8 as f64;
            ge += (s >= obs - 1e-9) as u8 as f64;
        }
        (le / tot, ge / tot)
    }

    fn pairwise_u(x: &[f64], y: &[f64]) -> f64 {
        let mut u = 0.0;
        for a in x {
            for b in y {
                u += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        u
    }

    #[test]
    fn u_matches_pairwise_count() {
        let x = [0.1, 0.4, 0.4, 0.9, 0.2];
        let y = [0.4, 0.5, 0.0, 0.3];
        let t = mann_whitney(&x, &y, RankTest::Normal).unwrap();
        assert!((t.u - pairwise_u(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn exact_matches_enumeration_with_ties() {
        let x = [0.1, 0.4, 0.4, 0.9, 0.2, 0.3];
        let y = [0.4, 0.5, 0.0, 0.3, 0.8, 0.8, 0.7];
        let t = mann_whitney(&x, &y, RankTest::Exact).unwrap();
        let (le, ge) = brute_tails(&x, &y);
        assert!((t.p_less - le).abs() < 1e-12);
        assert!((t.p_two_sided - (2.0 * le.min(ge)).min(1.0)).abs() < 1e-12);
    }

    #[test]
    fn perfectly_separated_is_extreme() {
        let x = [0.0; 8];
        let y = [1.0; 8];
        let t = mann_whitney(&x, &y, RankTest::Auto).unwrap();
        assert!(t.exact);
        assert_eq!(t.u, 0.0);
        // one arrangement out of C(16, 8)
        assert!((t.p_less - 1.0 / 12870.0).abs() < 1e-15);
        let big = mann_whitney(&[0.0; 50], &[1.0; 50], RankTest::Auto).unwrap();
        assert!(!big.exact && big.p_two_sided < 1e-15);
    }

    #[test]
    fn identical_distributions_not_significant() {
        let x: Vec<f64> = (0..40).map(|i| (i % 10) as f64).collect();
        let t = mann_whitney(&x, &x, RankTest::Normal).unwrap();
        assert!(t.z.abs() < 1e-12 && t.p_two_sided > 0.9);
        let s = separation_stats(&x, &x).unwrap();
        assert_eq!(s.gap, 0.0);
    }

    #[test]
    fn normal_approximation_close_to_exact() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.13 % 1.0).collect();
        let y: Vec<f64> = (0..10).map(|i| 0.3 + i as f64 * 0.17 % 1.0).collect();
        let e = mann_whitney(&x, &y, RankTest::Exact).unwrap();
        let a = mann_whitney(&x, &y, RankTest::Normal).unwrap();
        assert!((e.p_two_sided - a.p_two_sided).abs() < 0.02, "{} {}", e.p_two_sided, a.p_two_sided);
    }

    #[test]
    fn report_groups_by_provenance() {
        let edges = [(0, 1), (1, 2), (2, 3), (0, 3)];
        let inj: HashSet<Edge> = [(2, 3)].into_iter().collect();
        let r = SeparationReport::new(&edges, &[0.9, 0.8, 0.1, 0.7], &[1.0; 4], &inj).unwrap();
        assert_eq!((r.p_hat.n_noisy, r.p_hat.n_clean), (1, 3));
        assert!((r.p_hat.mean_clean - 0.8).abs() < 1e-12);
        assert!(SeparationReport::new(&edges, &[0.5; 4], &[1.0; 4], &HashSet::new()).is_err());
    }

    #[test]
    fn empty_group_errors() {
        assert!(mann_whitney(&[], &[1.0], RankTest::Auto).is_err());
    }
}
