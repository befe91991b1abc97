//! Command-line front end. Every command is a pure function of its flags
//! and input files, so reruns produce byte-identical artifacts.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dagnn::{load_checkpoint, save_checkpoint, Ablation, Checkpoint, GraphContext, LatentState, Manifest};
use crate::error::{Error, Result};
use crate::eval::{accuracy, append_results, link_auc, split_edges, write_summary, ResultRow, SeparationReport};
use crate::graph::{load_dataset, save_dataset};
use crate::graph::synthetic::PlantedPartition;
use crate::graph::GraphDataset;
use crate::noise::{generate_noise, FeatureMode, NoiseConfig, NoiseReport, Scenario};
use crate::train::{best_cell, train, train_links, Grid, GridCell, TrainConfig, TrainOutcome};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.json";
pub const THREADS_ENV: &str = "DANG_LAB_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Task {
    #[default]
    NodeClassification,
    LinkPrediction,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::NodeClassification => "node_classification",
            Task::LinkPrediction => "link_prediction",
        }
    }
}

/// JSON configuration file. Every field is optional; flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub noise: NoiseConfig,
    pub train: TrainConfig,
    pub task: Task,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub grid: Grid,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dang-lab", version, about = "Dependency-aware graph noise and a noise-robust variational GNN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corrupt a dataset and write it with a provenance report.
    GenNoise(GenNoiseArgs),
    /// Train a model and write a checkpoint and history.
    Train(TrainArgs),
    /// Score a checkpoint and append to a results table.
    Eval(EvalArgs),
    /// Exhaustive grid search with a resumable per-cell ledger.
    Sweep(SweepArgs),
    /// Write a synthetic two-block dataset.
    MakeFixture(FixtureArgs),
    /// Aggregate a results table into per-cell mean and std.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct GenNoiseArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_struct: Option<usize>,
    #[arg(long)]
    pub dep_scale: Option<f64>,
    #[arg(long)]
    pub indep_count: Option<usize>,
    /// Additive Gaussian feature noise with this standard deviation.
    #[arg(long)]
    pub gaussian_sigma: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Knobs shared by `train` and `sweep`.
#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub ablation: Option<String>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub theta1: Option<f64>,
    #[arg(long)]
    pub k_knn: Option<usize>,
    #[arg(long)]
    pub gamma: Option<usize>,
    /// Reject learning rates outside the standard tuning grid.
    #[arg(long)]
    pub strict_grid: bool,
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Seed of the 7:3 edge split for link prediction; defaults to the run seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub results: PathBuf,
    /// Noise provenance; adds separation statistics.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Dataset label in the results table; defaults to the directory name.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Grid JSON; overrides the `grid` key of the config file.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Parallel workers, capped by DANG_LAB_THREADS.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub nodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Validation(format!("missing --{flag}")))
}

fn existing_dir(p: &Path, what: &str) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} `{}` is not a directory", p.display())))
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Write to a sibling temp file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Fixed-precision rendering so stdout lines are stable across runs.
fn f4(x: f64) -> String {
    format!("{x:.4}")
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenNoise(a) => cmd_gen_noise(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::MakeFixture(a) => cmd_make_fixture(a),
        Command::Summarize(a) => {
            let cells = write_summary(&a.results, &a.out)?;
            println!("wrote {} cells to {}", cells.len(), a.out.display());
            Ok(())
        }
    }
}

pub fn cmd_make_fixture(a: FixtureArgs) -> Result<()> {
    let ds = PlantedPartition::with_nodes(a.nodes).generate(a.seed)?;
    save_dataset(&ds, &a.out)?;
    println!("nodes={} edges={} features={} classes={}", ds.n_nodes(), ds.n_edges(), ds.n_features(), ds.n_classes);
    Ok(())
}

pub fn cmd_gen_noise(a: GenNoiseArgs) -> Result<()> {
    let cfg_file = ExperimentConfig::load(a.config.as_deref())?;
    let mut cfg = cfg_file.noise.clone();
    if let Some(s) = a.scenario {
        cfg.scenario = s.parse::<Scenario>()?;
    }
    if let Some(v) = a.eta {
        cfg.eta = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.k_struct {
        cfg.k_struct = v;
    }
    if let Some(v) = a.dep_scale {
        cfg.dep_scale = v;
    }
    if let Some(v) = a.indep_count {
        cfg.indep_struct_count = Some(v);
    }
    if let Some(sigma) = a.gaussian_sigma {
        cfg.feature_mode = FeatureMode::Gaussian { sigma };
    }
    cfg.validate()?;
    let dataset = required(a.dataset.or(cfg_file.dataset), "dataset")?;
    let out = required(a.out.or(cfg_file.output), "out")?;
    existing_dir(&dataset, "dataset")?;
    let ds = load_dataset(&dataset)?;
    let (noisy, report) = generate_noise(&ds, &cfg)?;
    save_dataset(&noisy, &out)?;
    let path = out.join(REPORT_FILE);
    fs::write(&path, report.to_json()?).map_err(|e| Error::io(&path, e))?;
    println!("{} {}", cfg.scenario, report.one_line());
    Ok(())
}

/// Resolves config file plus flag overrides.
fn resolve_train(f: &TrainFlags) -> Result<(ExperimentConfig, TrainConfig)> {
    let file = ExperimentConfig::load(f.config.as_deref())?;
    let mut c = file.train.clone();
    if let Some(s) = file.seeds.first() {
        c.seed = *s;
    }
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(f.seed, c.seed);
    set!(f.epochs, c.epochs);
    set!(f.patience, c.patience);
    set!(f.lr, c.lr);
    set!(f.lambda1, c.hp.lambda1);
    set!(f.lambda2, c.hp.lambda2);
    set!(f.lambda3, c.hp.lambda3);
    set!(f.theta1, c.hp.theta1_mix);
    set!(f.k_knn, c.hp.k_knn);
    set!(f.gamma, c.hp.gamma_hop);
    if let Some(a) = &f.ablation {
        c.ablation = a.parse::<Ablation>()?;
    }
    c.strict_grid |= f.strict_grid;
    c.validate()?;
    Ok((file, c))
}

fn manifest(ds: &GraphDataset, cfg: &TrainConfig, out: &TrainOutcome, task: Task, split_seed: Option<u64>) -> Manifest {
    Manifest {
        n_nodes: ds.n_nodes(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes,
        n_observed_edges: out.state.p_el.len(),
        hp: cfg.hp.clone(),
        ablation: cfg.ablation,
        epoch: out.best_epoch,
        seed: cfg.seed,
        lr: cfg.lr,
        task: task.as_str().to_string(),
        split_seed,
        params: Vec::new(),
        buffers: Vec::new(),
    }
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    let (file, cfg) = resolve_train(&a.flags)?;
    let dataset = required(a.flags.dataset.clone().or(file.dataset.clone()), "dataset")?;
    let out_dir = required(a.flags.out.clone().or(file.output.clone()), "out")?;
    existing_dir(&dataset, "dataset")?;
    let task = a.flags.task.unwrap_or(file.task);
    let ds = load_dataset(&dataset)?;
    mkdir(&out_dir)?;

    let (outcome, split_seed, auc) = match task {
        Task::NodeClassification => (train(&ds, &cfg)?, None, None),
        Task::LinkPrediction => {
            let s = a.split_seed.unwrap_or(cfg.seed);
            let split = split_edges(ds.n_nodes(), &ds.edges, s)?;
            let l = train_links(&ds, &split, &cfg)?;
            (l.outcome, Some(s), Some(l.auc))
        }
    };
    let ck = Checkpoint::new(
        manifest(&ds, &cfg, &outcome, task, split_seed),
        outcome.model.clone(),
        outcome.state.p_el.clone(),
        outcome.state.tau.clone(),
    );
    save_checkpoint(&out_dir.join(CHECKPOINT_FILE), &ck)?;
    outcome.history.write_csv(&out_dir.join(HISTORY_FILE))?;
    let mut line = format!(
        "ablation={} epochs_run={} best_epoch={} train_acc={} val_acc={} test_acc={}",
        cfg.ablation,
        outcome.history.records.len(),
        outcome.best_epoch,
        f4(outcome.train_accuracy),
        f4(outcome.val_accuracy),
        f4(outcome.test_accuracy),
    );
    if let Some(auc) = auc {
        line += &format!(" link_auc={}", f4(auc));
    }
    println!("{line}");
    Ok(())
}

fn check_shapes(m: &Manifest, ds: &GraphDataset) -> Result<()> {
    let got = (ds.n_nodes(), ds.n_features(), ds.n_classes);
    let want = (m.n_nodes, m.n_features, m.n_classes);
    if got != want {
        return Err(Error::Validation(format!(
            "checkpoint expects (nodes, features, classes) = {want:?}, dataset has {got:?}"
        )));
    }
    Ok(())
}

/// Evaluation row of a checkpoint, plus separation statistics when a
/// provenance report is given.
pub fn evaluate(
    ck: &Checkpoint,
    ds: &GraphDataset,
    report: Option<&NoiseReport>,
    name: &str,
) -> Result<(ResultRow, Option<SeparationReport>)> {
    let m = &ck.manifest;
    check_shapes(m, ds)?;
    let (graph, task) = match m.task.as_str() {
        "node_classification" => (ds.clone(), Task::NodeClassification),
        "link_prediction" => {
            let s = m.split_seed.ok_or_else(|| Error::Validation("link checkpoint without split seed".into()))?;
            let split = split_edges(ds.n_nodes(), &ds.edges, s)?;
            (ds.with_edges(split.train_edges)?, Task::LinkPrediction)
        }
        other => return Err(Error::Validation(format!("unknown task `{other}` in checkpoint"))),
    };
    if graph.n_edges() != m.n_observed_edges || ck.p_el.len() != graph.n_edges() {
        return Err(Error::Validation(format!(
            "checkpoint was trained on {} observed edges, dataset gives {}",
            m.n_observed_edges,
            graph.n_edges()
        )));
    }
    let ctx = GraphContext::new(&graph, &m.hp)?;
    let mut state = LatentState::initial(graph.n_edges());
    state.p_el = ck.p_el.clone();
    state.tau = ck.tau.clone();
    ck.model.infer(&ctx, &mut state)?;

    let (acc, auc) = match task {
        Task::NodeClassification => (Some(accuracy(&state.y_hat, &ds.labels, &ds.test_mask)?), None),
        Task::LinkPrediction => {
            let split = split_edges(ds.n_nodes(), &ds.edges, m.split_seed.expect("checked"))?;
            (None, Some(link_auc(&state.z, &split.test_edges, &split.test_negatives)?))
        }
    };
    let sep = match report {
        Some(r) => {
            let injected: HashSet<_> = r.injected_edges();
            Some(SeparationReport::new(&graph.edges, &state.p_hat_observed(&ctx), &state.p_el, &injected)?)
        }
        None => None,
    };
    let (scenario, rate) = match report.and_then(|r| r.config.as_ref()) {
        Some(c) => (c.scenario.to_string(), c.eta),
        None => ("clean".to_string(), 0.0),
    };
    let row = ResultRow {
        dataset: name.to_string(),
        scenario,
        noise_rate: rate,
        method: format!("dagnn_{}", m.ablation),
        task: task.as_str().to_string(),
        seed: m.seed,
        accuracy: acc,
        roc_auc: auc,
        sep_gap: sep.as_ref().map(|s| s.p_hat.gap),
        sep_p_value: sep.as_ref().map(|s| s.p_hat.test.p_less),
    };
    Ok((row, sep))
}

pub fn cmd_eval(a: EvalArgs) -> Result<()> {
    existing_dir(&a.dataset, "dataset")?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let ds = load_dataset(&a.dataset)?;
    let report = match &a.report {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(serde_json::from_str::<NoiseReport>(&text)?)
        }
        None => None,
    };
    let name = a.name.clone().unwrap_or_else(|| {
        a.dataset.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let (row, sep) = evaluate(&ck, &ds, report.as_ref(), &name)?;
    append_results(&a.results, std::slice::from_ref(&row))?;
    let metric = match (row.accuracy, row.roc_auc) {
        (Some(acc), _) => format!("accuracy={}", f4(acc)),
        (_, Some(auc)) => format!("roc_auc={}", f4(auc)),
        _ => String::new(),
    };
    println!("{} {} {} {metric}", row.dataset, row.method, row.task);
    if let Some(s) = sep {
        println!("{}", serde_json::to_string(&s)?);
    }
    Ok(())
}

/// Ledger file of one finished grid cell.
fn cell_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("cells").join(format!("{index:05}.json"))
}

/// Previously finished cell, if its recorded configuration still matches.
fn cached_cell(dir: &Path, index: usize, config: &TrainConfig) -> Result<Option<GridCell>> {
    let p = cell_path(dir, index);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let cell: GridCell = serde_json::from_str(&text)?;
    if &cell.config != config {
        return Err(Error::Validation(format!(
            "ledger cell {} was produced by a different grid; use a fresh --out",
            p.display()
        )));
    }
    Ok(Some(cell))
}

pub const SCORES_HEADER: &str = "index,lr,lambda1,lambda2,theta1_mix,k_knn,gamma_hop,val_accuracy,test_accuracy,best_epoch,error";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let (file, base) = resolve_train(&a.flags)?;
    let dataset = required(a.flags.dataset.clone().or(file.dataset.clone()), "dataset")?;
    let out = required(a.flags.out.clone().or(file.output.clone()), "out")?;
    existing_dir(&dataset, "dataset")?;
    let grid = match &a.grid {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<Grid>(&text).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?
        }
        None => file.grid.clone(),
    };
    let ds = load_dataset(&dataset)?;
    mkdir(&out.join("cells"))?;

    let configs = grid.cells(&base);
    let mut cells: Vec<Option<GridCell>> = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        cells.push(cached_cell(&out, i, c)?);
    }
    let pending: Vec<usize> = (0..configs.len()).filter(|&i| cells[i].is_none()).collect();
    log::info!("{} cells, {} already in the ledger", configs.len(), configs.len() - pending.len());

    let run_pending = || -> Result<Vec<GridCell>> {
        use rayon::prelude::*;
        pending
            .par_iter()
            .map(|&i| {
                let cell = GridCell::run(i, &ds, configs[i].clone());
                write_atomic(&cell_path(&out, i), serde_json::to_string_pretty(&cell)?.as_bytes())?;
                Ok(cell)
            })
            .collect()
    };
    let fresh = match a.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.min(thread_cap().unwrap_or(w)).max(1))
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?
            .install(run_pending)?,
        None => run_pending()?,
    };
    for c in fresh {
        let i = c.index;
        cells[i] = Some(c);
    }
    let cells: Vec<GridCell> = cells.into_iter().map(|c| c.expect("every cell ran")).collect();

    let mut scores = String::from(SCORES_HEADER);
    scores.push('\n');
    for c in &cells {
        let h = &c.config.hp;
        scores += &format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            c.index,
            c.config.lr,
            h.lambda1,
            h.lambda2,
            h.theta1_mix,
            h.k_knn,
            h.gamma_hop,
            opt(c.val_accuracy),
            opt(c.test_accuracy),
            opt(c.best_epoch),
            c.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        );
    }
    write_atomic(&out.join("scores.csv"), scores.as_bytes())?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    let best = best_cell(&cells).ok_or_else(|| Error::Invalid("every grid cell failed".into()))?;
    write_atomic(
        &out.join("best_config.json"),
        format!("{}\n", serde_json::to_string_pretty(&cells[best].config)?).as_bytes(),
    )?;
    println!(
        "cells={} failed={} best={} val_acc={}",
        cells.len(),
        failed,
        best,
        f4(cells[best].val_accuracy.expect("best has a score"))
    );
    Ok(())
}

/// Worker cap from the environment, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Sizes the global pool from the environment cap. Safe to call once.
pub fn init_threads() {
    if let Some(n) = thread_cap() {
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialised; {THREADS_ENV} ignored");
        }
    }
}
