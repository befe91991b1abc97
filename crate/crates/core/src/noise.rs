//! Seeded corruption of a clean dataset: dependency-aware noise, where
//! feature noise drives structure noise and both drive label noise, and the
//! independent feature, structure and label scenarios.

use std::collections::{BTreeMap, HashSet};

use ndarray::{Array2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{seq::index, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::sample_absent_pairs;
use crate::graph::GraphDataset;
use crate::sparse::{edge, Edge};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Dang,
    FeatureOnly,
    StructureOnly,
    LabelOnly,
    Extreme,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Scenario::Dang, Scenario::FeatureOnly, Scenario::StructureOnly, Scenario::LabelOnly, Scenario::Extreme];
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dang" => Scenario::Dang,
            "feature_only" => Scenario::FeatureOnly,
            "structure_only" => Scenario::StructureOnly,
            "label_only" => Scenario::LabelOnly,
            "extreme" => Scenario::Extreme,
            other => return Err(Error::Validation(format!("unknown scenario `{other}`"))),
        })
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scenario::Dang => "dang",
            Scenario::FeatureOnly => "feature_only",
            Scenario::StructureOnly => "structure_only",
            Scenario::LabelOnly => "label_only",
            Scenario::Extreme => "extreme",
        };
        f.pad(s)
    }
}

/// How noisy rows are perturbed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureMode {
    /// Every dimension redrawn from Bernoulli(row mean). Requires 0/1 features.
    #[default]
    Bernoulli,
    /// Additive `N(0, sigma^2)`; only used when asked for.
    Gaussian { sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub scenario: Scenario,
    /// Fraction of nodes (or edges / labels for the independent scenarios).
    pub eta: f64,
    /// Dependent edges per noisy node before scaling.
    pub k_struct: usize,
    /// Random absent pairs added last; `None` means `|noisy| * k_struct`.
    pub indep_struct_count: Option<usize>,
    /// Multiplier on the dependent edge count. 0 removes every dependency.
    pub dep_scale: f64,
    pub feature_mode: FeatureMode,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            scenario: Scenario::Dang,
            eta: 0.3,
            k_struct: 5,
            indep_struct_count: None,
            dep_scale: 1.0,
            feature_mode: FeatureMode::Bernoulli,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Validation(format!("eta must be in [0,1], got {}", self.eta)));
        }
        if !(self.dep_scale >= 0.0) || !self.dep_scale.is_finite() {
            return Err(Error::Validation(format!("dep_scale must be >= 0, got {}", self.dep_scale)));
        }
        if let FeatureMode::Gaussian { sigma } = self.feature_mode {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::Validation(format!("sigma must be >= 0, got {sigma}")));
            }
        }
        Ok(())
    }

    /// Dependent edges requested per noisy node.
    pub fn dep_k(&self) -> usize {
        round_half_up(self.k_struct as f64 * self.dep_scale)
    }
}

/// Everything that was changed, for assertions and separation analysis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub noisy_nodes: Vec<usize>,
    pub injected_dep_edges: Vec<Edge>,
    pub injected_indep_edges: Vec<Edge>,
    /// Only labels whose value actually changed: node -> (old, new).
    pub flipped_labels: BTreeMap<usize, (usize, usize)>,
    /// Per noisy node, how many dimensions changed value.
    pub flipped_feature_counts: BTreeMap<usize, usize>,
    /// Labeled nodes whose label was redrawn, changed or not.
    pub label_candidates: Vec<usize>,
    pub config: Option<NoiseConfig>,
}

impl NoiseReport {
    pub fn injected_edges(&self) -> HashSet<Edge> {
        self.injected_dep_edges
            .iter()
            .chain(&self.injected_indep_edges)
            .copied()
            .collect()
    }

    /// JSON with object keys in sorted order.
    pub fn to_json(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        let mut s = serde_json::to_string_pretty(&v)?;
        s.push('\n');
        Ok(s)
    }

    pub fn one_line(&self) -> String {
        format!(
            "noisy_nodes={} dep_edges={} indep_edges={} flipped_labels={} label_candidates={}",
            self.noisy_nodes.len(),
            self.injected_dep_edges.len(),
            self.injected_indep_edges.len(),
            self.flipped_labels.len(),
            self.label_candidates.len()
        )
    }
}

/// `floor(x + 0.5)` for non-negative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

pub fn is_binary(x: &Array2<f64>) -> bool {
    x.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn sample_nodes<R: Rng + ?Sized>(pool: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = index::sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    v.sort_unstable();
    v
}

/// Redraws the rows of `nodes`. Returns per-node changed-dimension counts.
pub fn inject_feature_noise<R: Rng + ?Sized>(
    features: &mut Array2<f64>,
    nodes: &[usize],
    mode: FeatureMode,
    rng: &mut R,
) -> Result<BTreeMap<usize, usize>> {
    if let Some(&i) = nodes.iter().find(|&&i| i >= features.nrows()) {
        return Err(Error::Invalid(format!("noisy node {i} out of range")));
    }
    let mut counts = BTreeMap::new();
    match mode {
        FeatureMode::Bernoulli => {
            if !is_binary(features) {
                return Err(Error::Validation(
                    "Bernoulli feature noise needs 0/1 features; request the gaussian mode explicitly".into(),
                ));
            }
            for &i in nodes {
                let mut row = features.row_mut(i);
                let p = row.mean().unwrap_or(0.0);
                let mut changed = 0;
                for v in row.iter_mut() {
                    let new = if rng.random_bool(p) { 1.0 } else { 0.0 };
                    changed += (new != *v) as usize;
                    *v = new;
                }
                counts.insert(i, changed);
            }
        }
        FeatureMode::Gaussian { sigma } => {
            let dist = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(e.to_string()))?;
            for &i in nodes {
                let mut row = features.row_mut(i);
                let mut changed = 0;
                for v in row.iter_mut() {
                    let d = dist.sample(rng);
                    changed += (d != 0.0) as usize;
                    *v += d;
                }
                counts.insert(i, changed);
            }
        }
    }
    Ok(counts)
}

fn unit_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut u = x.clone();
    for mut r in u.axis_iter_mut(Axis(0)) {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r /= n;
        }
    }
    u
}

/// For each noisy node in ascending order, adds its `k` most similar absent
/// pairs, comparing its corrupted row to the other nodes' original rows.
/// Ties go to the lower index; pairs chosen by an earlier node are skipped.
pub fn inject_dependent_structure_noise(
    noisy_features: &Array2<f64>,
    original_features: &Array2<f64>,
    noisy_nodes: &[usize],
    k: usize,
    edges: &[Edge],
) -> Result<Vec<Edge>> {
    if noisy_features.dim() != original_features.dim() {
        return Err(Error::shape("dependent structure", "feature matrices differ in shape"));
    }
    if k == 0 || noisy_nodes.is_empty() {
        return Ok(Vec::new());
    }
    let n = original_features.nrows();
    let orig = unit_rows(original_features);
    let rows: Vec<usize> = noisy_nodes.to_vec();
    let noisy = unit_rows(&noisy_features.select(Axis(0), &rows));
    let sims = noisy.dot(&orig.t());
    let mut present: HashSet<Edge> = edges.iter().map(|&(a, b)| edge(a, b)).collect();
    let mut out = Vec::new();
    for (r, &i) in rows.iter().enumerate() {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i && !present.contains(&edge(i, j)))
            .map(|j| (sims[[r, j]], j))
            .collect();
        cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, j) in cand.iter().take(k) {
            let e = edge(i, j);
            present.insert(e);
            out.push(e);
        }
    }
    Ok(out)
}

/// Labeled nodes that are noisy themselves or touch an injected dependent edge.
pub fn label_noise_candidates(
    labeled_mask: &[bool],
    noisy_nodes: &[usize],
    dep_edges: &[Edge],
) -> Vec<usize> {
    let mut flag = vec![false; labeled_mask.len()];
    for &i in noisy_nodes {
        flag[i] = true;
    }
    for &(a, b) in dep_edges {
        flag[a] = true;
        flag[b] = true;
    }
    (0..labeled_mask.len()).filter(|&i| flag[i] && labeled_mask[i]).collect()
}

/// Redraws each affected label from the normalized class histogram of its
/// neighbours' labels in `graph_edges`. Isolated nodes keep their label.
/// Returns only the labels that changed.
pub fn inject_dependent_label_noise<R: Rng + ?Sized>(
    labels: &[usize],
    n_classes: usize,
    affected: &[usize],
    graph_edges: &[Edge],
    rng: &mut R,
) -> Result<BTreeMap<usize, (usize, usize)>> {
    let n = labels.len();
    let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in graph_edges {
        if a >= n || b >= n {
            return Err(Error::Invalid(format!("edge ({a}, {b}) out of range")));
        }
        nbrs[a].push(b);
        nbrs[b].push(a);
    }
    let mut flipped = BTreeMap::new();
    for &i in affected {
        if nbrs[i].is_empty() {
            continue;
        }
        let mut hist = vec![0.0; n_classes];
        for &j in &nbrs[i] {
            hist[labels[j]] += 1.0;
        }
        let dist = WeightedIndex::new(&hist).map_err(|e| Error::Invalid(e.to_string()))?;
        let new = dist.sample(rng);
        if new != labels[i] {
            flipped.insert(i, (labels[i], new));
        }
    }
    Ok(flipped)
}

/// Exactly `count` uniformly drawn absent pairs.
pub fn inject_independent_structure_noise<R: Rng + ?Sized>(
    n: usize,
    edges: &[Edge],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Edge>> {
    let taken: HashSet<Edge> = edges.iter().map(|&(a, b)| edge(a, b)).collect();
    let mut out = sample_absent_pairs(n, &taken, count, rng)?;
    out.sort_unstable();
    Ok(out)
}

/// Moves each selected label to a uniformly drawn different class.
fn uniform_label_noise<R: Rng + ?Sized>(
    labels: &[usize],
    n_classes: usize,
    nodes: &[usize],
    rng: &mut R,
) -> Result<BTreeMap<usize, (usize, usize)>> {
    if n_classes < 2 && !nodes.is_empty() {
        return Err(Error::Validation("uniform label noise needs at least 2 classes".into()));
    }
    let mut out = BTreeMap::new();
    for &i in nodes {
        let old = labels[i];
        let mut new = rng.random_range(0..n_classes - 1);
        if new >= old {
            new += 1;
        }
        out.insert(i, (old, new));
    }
    Ok(out)
}

fn assemble(
    ds: &GraphDataset,
    features: Array2<f64>,
    report: &NoiseReport,
) -> Result<GraphDataset> {
    let mut edges = ds.edges.clone();
    edges.extend(&report.injected_dep_edges);
    edges.extend(&report.injected_indep_edges);
    let mut out = ds.with_edges(edges)?;
    out.features = features;
    for (&i, &(_, new)) in &report.flipped_labels {
        out.labels[i] = new;
    }
    out.validate()?;
    Ok(out)
}

/// Dependency-aware corruption: feature noise on a sampled node set, then
/// similarity-driven edges, then neighbourhood-driven labels, then random
/// edges. The input dataset is left untouched.
pub fn generate_dang(ds: &GraphDataset, cfg: &NoiseConfig) -> Result<(GraphDataset, NoiseReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = ds.n_nodes();
    let all: Vec<usize> = (0..n).collect();
    let noisy_nodes = sample_nodes(&all, round_half_up(cfg.eta * n as f64), &mut rng);

    let mut features = ds.features.clone();
    let flipped_feature_counts = inject_feature_noise(&mut features, &noisy_nodes, cfg.feature_mode, &mut rng)?;

    let injected_dep_edges =
        inject_dependent_structure_noise(&features, &ds.features, &noisy_nodes, cfg.dep_k(), &ds.edges)?;

    let (label_candidates, flipped_labels) = if cfg.dep_scale > 0.0 {
        let cand = label_noise_candidates(&ds.labeled_mask(), &noisy_nodes, &injected_dep_edges);
        let mut graph = ds.edges.clone();
        graph.extend(&injected_dep_edges);
        let flips = inject_dependent_label_noise(&ds.labels, ds.n_classes, &cand, &graph, &mut rng)?;
        (cand, flips)
    } else {
        (Vec::new(), BTreeMap::new())
    };

    let indep_count = cfg
        .indep_struct_count
        .unwrap_or(noisy_nodes.len() * cfg.k_struct);
    let mut present = ds.edges.clone();
    present.extend(&injected_dep_edges);
    let injected_indep_edges = inject_independent_structure_noise(n, &present, indep_count, &mut rng)?;

    let report = NoiseReport {
        noisy_nodes,
        injected_dep_edges,
        injected_indep_edges,
        flipped_labels,
        flipped_feature_counts,
        label_candidates,
        config: Some(cfg.clone()),
    };
    let noisy = assemble(ds, features, &report)?;
    Ok((noisy, report))
}

/// One of the independent scenarios at `rate`.
pub fn generate_independent_noise<R: Rng + ?Sized>(
    ds: &GraphDataset,
    scenario: Scenario,
    rate: f64,
    mode: FeatureMode,
    rng: &mut R,
) -> Result<(GraphDataset, NoiseReport)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Validation(format!("eta must be in [0,1], got {rate}")));
    }
    let (feat, structure, label) = match scenario {
        Scenario::FeatureOnly => (true, false, false),
        Scenario::StructureOnly => (false, true, false),
        Scenario::LabelOnly => (false, false, true),
        Scenario::Extreme => (true, true, true),
        Scenario::Dang => {
            return Err(Error::Validation("dang is not an independent scenario".into()));
        }
    };
    let n = ds.n_nodes();
    let mut report = NoiseReport::default();
    let mut features = ds.features.clone();
    if feat {
        let all: Vec<usize> = (0..n).collect();
        report.noisy_nodes = sample_nodes(&all, round_half_up(rate * n as f64), rng);
        report.flipped_feature_counts = inject_feature_noise(&mut features, &report.noisy_nodes, mode, rng)?;
    }
    if structure {
        let count = round_half_up(rate * ds.n_edges() as f64);
        report.injected_indep_edges = inject_independent_structure_noise(n, &ds.edges, count, rng)?;
    }
    if label {
        let labeled: Vec<usize> = (0..n).filter(|&i| ds.labeled_mask()[i]).collect();
        let chosen = sample_nodes(&labeled, round_half_up(rate * labeled.len() as f64), rng);
        report.flipped_labels = uniform_label_noise(&ds.labels, ds.n_classes, &chosen, rng)?;
        report.label_candidates = chosen;
    }
    let noisy = assemble(ds, features, &report)?;
    Ok((noisy, report))
}

/// Dispatches on `cfg.scenario`.
pub fn generate_noise(ds: &GraphDataset, cfg: &NoiseConfig) -> Result<(GraphDataset, NoiseReport)> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::Dang => generate_dang(ds, cfg),
        s => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (d, mut r) = generate_independent_noise(ds, s, cfg.eta, cfg.feature_mode, &mut rng)?;
            r.config = Some(cfg.clone());
            Ok((d, r))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic::PlantedPartition;
    use crate::graph::Splits;
    use ndarray::array;

    fn fixture(n: usize, seed: u64) -> GraphDataset {
        PlantedPartition::with_nodes(n).generate(seed).unwrap()
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(0.3 * 500.0), 150);
        assert_eq!(round_half_up(0.49), 0);
    }

    #[test]
    fn constant_rows_are_fixed_points() {
        let mut x = array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = inject_feature_noise(&mut x, &[0, 1], FeatureMode::Bernoulli, &mut rng).unwrap();
        assert_eq!(x, array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        assert_eq!(c.values().sum::<usize>(), 0);
    }

    #[test]
    fn bernoulli_fraction_follows_row_mean() {
        let f = 10_000;
        let mut x = Array2::zeros((1, f));
        for j in 0..3000 {
            x[[0, j]] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        inject_feature_noise(&mut x, &[0], FeatureMode::Bernoulli, &mut rng).unwrap();
        let frac = x.sum() / f as f64;
        assert!((frac - 0.3).abs() < 0.015, "{frac}");
    }

    #[test]
    fn non_binary_rejected_unless_gaussian() {
        let mut x = array![[0.5, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(inject_feature_noise(&mut x, &[0], FeatureMode::Bernoulli, &mut rng).is_err());
        assert!(inject_feature_noise(&mut x, &[0], FeatureMode::Gaussian { sigma: 0.1 }, &mut rng).is_ok());
        assert_ne!(x, array![[0.5, 1.0]]);
    }

    #[test]
    fn identical_row_is_selected() {
        let orig = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut noisy = orig.clone();
        noisy.row_mut(0).assign(&orig.row(2));
        let e = inject_dependent_structure_noise(&noisy, &orig, &[0], 1, &[]).unwrap();
        assert_eq!(e, vec![(0, 2)]);
    }

    #[test]
    fn saturation_adds_everything_once() {
        let x = Array2::from_elem((4, 2), 1.0);
        let e = inject_dependent_structure_noise(&x, &x, &[0, 1], 10, &[(0, 1)]).unwrap();
        let mut got = e.clone();
        got.sort_unstable();
        assert_eq!(got, vec![(0, 2), (0, 3), (1, 2), (1, 3)]);
    }

    #[test]
    fn dependent_edges_match_brute_force() {
        let ds = fixture(30, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let nodes = sample_nodes(&(0..30).collect::<Vec<_>>(), 9, &mut rng);
        let mut noisy = ds.features.clone();
        inject_feature_noise(&mut noisy, &nodes, FeatureMode::Bernoulli, &mut rng).unwrap();
        let got = inject_dependent_structure_noise(&noisy, &ds.features, &nodes, 3, &ds.edges).unwrap();

        let cos = |a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>| {
            let d = a.dot(&a).sqrt() * b.dot(&b).sqrt();
            if d == 0.0 { 0.0 } else { a.dot(&b) / d }
        };
        let mut present = ds.edge_set();
        let mut expected = Vec::new();
        for &i in &nodes {
            let mut best: Vec<(f64, usize)> = Vec::new();
            for j in 0..30 {
                if j != i && !present.contains(&edge(i, j)) {
                    best.push((cos(noisy.row(i), ds.features.row(j)), j));
                }
            }
            best.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, j) in best.iter().take(3) {
                present.insert(edge(i, j));
                expected.push(edge(i, j));
            }
        }
        assert_eq!(got, expected);
    }

    #[test]
    fn label_noise_unanimous_and_isolated() {
        let labels = [0, 2, 2, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = inject_dependent_label_noise(&labels, 3, &[0, 3], &[(0, 1), (0, 2)], &mut rng).unwrap();
        assert_eq!(f.get(&0), Some(&(0, 2)));
        assert!(!f.contains_key(&3));
    }

    #[test]
    fn label_noise_follows_histogram() {
        let labels = [1, 0, 0, 1];
        let edges = [(0, 1), (0, 2), (0, 3)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trials = 10_000;
        let mut zeros = 0;
        for _ in 0..trials {
            let f = inject_dependent_label_noise(&labels, 2, &[0], &edges, &mut rng).unwrap();
            zeros += f.contains_key(&0) as usize;
        }
        let freq = zeros as f64 / trials as f64;
        assert!((freq - 2.0 / 3.0).abs() < 0.02, "{freq}");
    }

    #[test]
    fn independent_structure_counts() {
        let ds = fixture(100, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(inject_independent_structure_noise(100, &ds.edges, 0, &mut rng).unwrap().is_empty());
        let e = inject_independent_structure_noise(100, &ds.edges, 100, &mut rng).unwrap();
        assert_eq!(e.len(), 100);
        let present = ds.edge_set();
        assert!(e.iter().all(|p| !present.contains(p) && p.0 < p.1));
        let k4: Vec<Edge> = (0..4).flat_map(|a| (a + 1..4).map(move |b| (a, b))).collect();
        assert!(inject_independent_structure_noise(4, &k4, 1, &mut rng).is_err());
    }

    #[test]
    fn dang_eta_zero_is_identity() {
        let ds = fixture(100, 1);
        let cfg = NoiseConfig { eta: 0.0, ..NoiseConfig::default() };
        let (noisy, r) = generate_dang(&ds, &cfg).unwrap();
        assert_eq!(noisy, ds);
        assert!(r.noisy_nodes.is_empty() && r.injected_edges().is_empty() && r.flipped_labels.is_empty());
    }

    #[test]
    fn dang_provenance_and_reproducibility() {
        let ds = fixture(100, 1);
        let before = ds.clone();
        let cfg = NoiseConfig { eta: 0.5, seed: 3, ..NoiseConfig::default() };
        let (noisy, r) = generate_dang(&ds, &cfg).unwrap();
        assert_eq!(ds, before);
        assert_eq!(r.noisy_nodes.len(), 50);
        let orig = ds.edge_set();
        let inj = r.injected_edges();
        assert!(inj.iter().all(|e| !orig.contains(e)));
        assert!(noisy.edges.iter().all(|e| orig.contains(e) || inj.contains(e)));
        assert_eq!(noisy.n_edges(), ds.n_edges() + inj.len());
        assert_eq!(r.injected_indep_edges.len(), 50 * 5);
        let labeled = ds.labeled_mask();
        assert!(r.flipped_labels.keys().all(|&i| labeled[i]));
        for i in 0..100 {
            if ds.test_mask[i] {
                assert_eq!(noisy.labels[i], ds.labels[i]);
            }
        }
        let (n2, r2) = generate_dang(&ds, &cfg).unwrap();
        assert_eq!((n2, r2.to_json().unwrap()), (noisy, r.to_json().unwrap()));
    }

    #[test]
    fn dependency_free_variant() {
        let ds = fixture(100, 2);
        let cfg = NoiseConfig { eta: 0.3, dep_scale: 0.0, k_struct: 0, indep_struct_count: Some(40), ..NoiseConfig::default() };
        let (_, r) = generate_dang(&ds, &cfg).unwrap();
        assert!(r.injected_dep_edges.is_empty() && r.flipped_labels.is_empty());
        assert_eq!((r.noisy_nodes.len(), r.injected_indep_edges.len()), (30, 40));
    }

    #[test]
    fn dep_scale_multiplies_edges() {
        let ds = fixture(100, 2);
        let base = NoiseConfig { eta: 0.1, ..NoiseConfig::default() };
        let big = NoiseConfig { dep_scale: 4.0, ..base.clone() };
        let (_, a) = generate_dang(&ds, &base).unwrap();
        let (_, b) = generate_dang(&ds, &big).unwrap();
        assert_eq!(a.injected_dep_edges.len(), 50);
        assert_eq!(b.injected_dep_edges.len(), 200);
    }

    #[test]
    fn eta_out_of_range() {
        let ds = fixture(100, 0);
        let cfg = NoiseConfig { eta: 1.5, ..NoiseConfig::default() };
        let err = generate_dang(&ds, &cfg).unwrap_err();
        assert!(err.to_string().contains("eta must be in [0,1]"));
    }

    #[test]
    fn independent_scenarios() {
        let ds = fixture(200, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (noisy, r) = generate_independent_noise(&ds, Scenario::LabelOnly, 0.3, FeatureMode::Bernoulli, &mut rng).unwrap();
        // 40 labeled nodes.
        assert_eq!(r.flipped_labels.len(), 12);
        assert!(r.flipped_labels.iter().all(|(&i, &(a, b))| a != b && noisy.labels[i] == b));

        let splits = Splits { train: (0..20).collect(), val: vec![], test: vec![], num_classes: None };
        let edges: Vec<Edge> = (0..200).map(|i| (i, (i + 1) % 200)).collect();
        let ring = GraphDataset::new(ds.features.clone(), edges, ds.labels.clone(), 2, &splits).unwrap();
        let (_, r) = generate_independent_noise(&ring, Scenario::StructureOnly, 0.5, FeatureMode::Bernoulli, &mut rng).unwrap();
        assert_eq!(r.injected_indep_edges.len(), 100);

        let (same, r) = generate_independent_noise(&ds, Scenario::Extreme, 0.0, FeatureMode::Bernoulli, &mut rng).unwrap();
        assert_eq!(same, ds);
        assert!(r.injected_edges().is_empty());
        assert!(generate_independent_noise(&ds, Scenario::Dang, 0.1, FeatureMode::Bernoulli, &mut rng).is_err());
    }

    #[test]
    fn report_json_keys_sorted() {
        let ds = fixture(50, 0);
        let (_, r) = generate_dang(&ds, &NoiseConfig::default()).unwrap();
        let s = r.to_json().unwrap();
        let pos = |k: &str| s.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("config") < pos("flipped_feature_counts"));
        assert!(pos("injected_dep_edges") < pos("noisy_nodes"));
        let back: NoiseReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
