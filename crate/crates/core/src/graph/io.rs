//! Text dataset directory: `edges.tsv`, `features.csv`, `labels.csv`,
//! `splits.json`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{GraphDataset, Splits};
use crate::error::{Error, Result};
use crate::sparse::Edge;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLITS_FILE: &str = "splits.json";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<GraphDataset> {
    let dir = dir.as_ref();
    let fpath = dir.join(FEATURES_FILE);
    let ftext = read(&fpath)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in lines(&ftext) {
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(&fpath, ln, format!("bad float `{}`", t.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    &fpath,
                    ln,
                    format!("{} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let f = rows.first().map_or(0, Vec::len);
    let features = Array2::from_shape_vec((n, f), rows.into_iter().flatten().collect())
        .expect("rectangular by construction");

    let lpath = dir.join(LABELS_FILE);
    let ltext = read(&lpath)?;
    let mut labels = Vec::with_capacity(n);
    for (ln, line) in lines(&ltext) {
        let y = line
            .trim()
            .parse::<usize>()
            .map_err(|_| parse_err(&lpath, ln, format!("bad label `{}`", line.trim())))?;
        labels.push(y);
    }
    if labels.len() != n {
        return Err(Error::Validation(format!(
            "{} has {} rows but {} has {n}",
            LABELS_FILE,
            labels.len(),
            FEATURES_FILE
        )));
    }

    let epath = dir.join(EDGES_FILE);
    let etext = read(&epath)?;
    let mut edges: Vec<Edge> = Vec::new();
    let mut seen: HashMap<Edge, usize> = HashMap::new();
    for (ln, line) in lines(&etext) {
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(&epath, ln, "expected `src<TAB>dst`"));
        };
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| parse_err(&epath, ln, format!("bad node id `{t}`")))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        if a >= n || b >= n {
            return Err(parse_err(&epath, ln, format!("node id out of range for {n} nodes")));
        }
        if a == b {
            return Err(parse_err(&epath, ln, format!("self-loop on node {a}")));
        }
        let e = crate::sparse::edge(a, b);
        if let Some(prev) = seen.insert(e, ln) {
            return Err(parse_err(
                &epath,
                ln,
                format!("duplicate edge {} {} (first on line {prev})", e.0, e.1),
            ));
        }
        edges.push(e);
    }

    let spath = dir.join(SPLITS_FILE);
    let splits: Splits = serde_json::from_str(&read(&spath)?)
        .map_err(|e| parse_err(&spath, e.line(), e.to_string()))?;
    let n_classes = match splits.num_classes {
        Some(c) => c,
        None => labels.iter().max().map_or(0, |m| m + 1),
    };
    GraphDataset::new(features, edges, labels, n_classes, &splits)
}

/// Writes the four dataset files. Output is a pure function of the dataset.
pub fn save_dataset(ds: &GraphDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };

    let mut edges = String::new();
    for &(u, v) in &ds.edges {
        writeln!(edges, "{u}\t{v}").unwrap();
    }
    write(EDGES_FILE, edges)?;

    let mut feats = String::new();
    for row in ds.features.rows() {
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                feats.push(',');
            }
            write!(feats, "{x}").unwrap();
        }
        feats.push('\n');
    }
    write(FEATURES_FILE, feats)?;

    let mut labels = String::new();
    for y in &ds.labels {
        writeln!(labels, "{y}").unwrap();
    }
    write(LABELS_FILE, labels)?;

    let mut splits = serde_json::to_string_pretty(&ds.splits())?;
    splits.push('\n');
    write(SPLITS_FILE, splits)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path, edges: &str) {
        fs::write(dir.join(EDGES_FILE), edges).unwrap();
        fs::write(dir.join(FEATURES_FILE), "1,0\n0,1\n1,1\n").unwrap();
        fs::write(dir.join(LABELS_FILE), "0\n1\n0\n").unwrap();
        fs::write(dir.join(SPLITS_FILE), r#"{"train":[0],"val":[1],"test":[2]}"#).unwrap();
    }

    #[test]
    fn loads_path_graph() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), "0\t1\n1\t2\n");
        let ds = load_dataset(tmp.path()).unwrap();
        assert_eq!((ds.n_nodes(), ds.n_edges(), ds.n_features(), ds.n_classes), (3, 2, 2, 2));
    }

    #[test]
    fn duplicate_edge_names_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), "0 1\n1\t2\n0 1\n");
        let err = load_dataset(tmp.path()).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("duplicate"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_and_missing_files() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), "0\t1\nzero\t2\n");
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Parse { line: 2, .. })));

        write_fixture(tmp.path(), "0\t1\n");
        fs::write(tmp.path().join(LABELS_FILE), "0\n1\n").unwrap();
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Validation(_))));

        fs::remove_file(tmp.path().join(FEATURES_FILE)).unwrap();
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn label_out_of_range_with_declared_classes() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), "0\t1\n");
        fs::write(
            tmp.path().join(SPLITS_FILE),
            r#"{"train":[0],"val":[1],"test":[2],"num_classes":1}"#,
        )
        .unwrap();
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn save_then_load_is_identity() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), "1\t0\n2\t1\n");
        let ds = load_dataset(tmp.path()).unwrap();
        let out = tmp.path().join("copy");
        save_dataset(&ds, &out).unwrap();
        assert_eq!(fs::read_to_string(out.join(EDGES_FILE)).unwrap(), "0\t1\n1\t2\n");
        assert_eq!(load_dataset(&out).unwrap(), ds);
    }
}
