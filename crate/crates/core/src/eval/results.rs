//! `results.csv` (append-only) and `summary.json` (derived).

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunSummary;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str =
    "dataset,scenario,noise_rate,method,task,seed,accuracy,roc_auc,sep_gap,sep_p_value";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub scenario: String,
    pub noise_rate: f64,
    pub method: String,
    pub task: String,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub roc_auc: Option<f64>,
    pub sep_gap: Option<f64>,
    pub sep_p_value: Option<f64>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

/// Appends rows, writing the header first when the file is new and
/// refusing files whose header differs.
pub fn append_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let exists = path.exists() && fs::metadata(path).map_err(|e| Error::io(path, e))?.len() > 0;
    if exists {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut first = String::new();
        BufReader::new(f).read_line(&mut first).map_err(|e| Error::io(path, e))?;
        if first.trim_end() != RESULTS_HEADER {
            return Err(Error::Validation(format!(
                "{} has header `{}`, expected `{RESULTS_HEADER}`",
                path.display(),
                first.trim_end()
            )));
        }
    }
    let mut buf = Vec::new();
    if !exists {
        writeln!(buf, "{RESULTS_HEADER}").unwrap();
    }
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Validation(format!("{} has an unexpected header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Mean and spread of every metric for one experimental cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dataset: String,
    pub scenario: String,
    pub noise_rate: f64,
    pub method: String,
    pub task: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, RunSummary>,
}

/// Groups rows by everything except the seed. Order follows the sorted
/// cell key, so the output does not depend on row order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<CellSummary> {
    type Key = (String, String, String, String, String);
    let mut cells: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (
            r.dataset.clone(),
            r.scenario.clone(),
            format!("{}", r.noise_rate),
            r.method.clone(),
            r.task.clone(),
        );
        cells.entry(key).or_default().push(r);
    }
    cells
        .into_values()
        .map(|mut group| {
            group.sort_by_key(|r| r.seed);
            let first = group[0];
            let mut metrics = BTreeMap::new();
            let metric = |f: fn(&ResultRow) -> Option<f64>| -> Option<RunSummary> {
                let v: Vec<f64> = group.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| RunSummary::new(v))
            };
            for (name, f) in [
                ("accuracy", (|r: &ResultRow| r.accuracy) as fn(&ResultRow) -> Option<f64>),
                ("roc_auc", |r| r.roc_auc),
                ("sep_gap", |r| r.sep_gap),
                ("sep_p_value", |r| r.sep_p_value),
            ] {
                if let Some(s) = metric(f) {
                    metrics.insert(name.to_string(), s);
                }
            }
            CellSummary {
                dataset: first.dataset.clone(),
                scenario: first.scenario.clone(),
                noise_rate: first.noise_rate,
                method: first.method.clone(),
                task: first.task.clone(),
                seeds: group.iter().map(|r| r.seed).collect(),
                metrics,
            }
        })
        .collect()
}

/// Regenerates `summary.json` from `results.csv`.
pub fn write_summary(results: &Path, summary: &Path) -> Result<Vec<CellSummary>> {
    let cells = aggregate(&read_results(results)?);
    let mut s = serde_json::to_string_pretty(&cells)?;
    s.push('\n');
    fs::write(summary, s).map_err(|e| Error::io(summary, e))?;
    Ok(cells)
}
