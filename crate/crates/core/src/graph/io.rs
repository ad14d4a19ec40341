//! Graph directories on disk.
//!
//! ```text
//! edges.csv      u,v           one undirected edge per row, 0-based
//! features.csv   x_0,...,x_F   row i = node i
//! labels.csv     c             row i = node i
//! splits.csv     train|val|test
//! meta.json      {"num_nodes", "num_classes", "feature_dim"}
//! ```
//!
//! No header rows. Reals are written in shortest round-trip form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, Split};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMeta {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(f))
}

fn records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut out = Vec::new();
    for (i, rec) in reader(path)?.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

fn parse_id(path: &Path, line: usize, s: &str, n: usize) -> Result<usize> {
    let id: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("`{s}` is not a node id")))?;
    if id >= n {
        return Err(Error::parse(path, line, format!("node id {id} >= num_nodes {n}")));
    }
    Ok(id)
}

/// Reads `u,v[,...]` rows; extra columns are ignored and a leading
/// `u,v...` header row is skipped.
pub fn load_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (i, rec) in records(path)?.iter().enumerate() {
        let line = i + 1;
        if i == 0 && rec.get(0).map(str::trim) == Some("u") {
            continue;
        }
        if rec.len() < 2 {
            return Err(Error::parse(path, line, "expected `u,v`"));
        }
        let u = parse_id(path, line, &rec[0], num_nodes)?;
        let v = parse_id(path, line, &rec[1], num_nodes)?;
        if u == v {
            return Err(Error::parse(path, line, format!("self-loop at node {u}")));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "graph directory not found"),
        ));
    }
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: GraphMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::parse(&meta_path, e.line(), e.to_string()))?;
    let n = meta.num_nodes;

    let edges = load_edges(&dir.join("edges.csv"), n)?;

    let fpath = dir.join("features.csv");
    let frows = records(&fpath)?;
    if frows.len() != n {
        return Err(Error::parse(&fpath, frows.len(), format!("expected {n} rows, found {}", frows.len())));
    }
    let mut fdata = Vec::with_capacity(n * meta.feature_dim);
    for (i, rec) in frows.iter().enumerate() {
        if rec.len() != meta.feature_dim {
            return Err(Error::parse(
                &fpath,
                i + 1,
                format!("expected {} values, found {}", meta.feature_dim, rec.len()),
            ));
        }
        for s in rec {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::parse(&fpath, i + 1, format!("`{s}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(&fpath, i + 1, "non-finite feature value"));
            }
            fdata.push(v);
        }
    }
    let features = Matrix::from_vec(n, meta.feature_dim, fdata)?;

    let lpath = dir.join("labels.csv");
    let lrows = records(&lpath)?;
    if lrows.len() != n {
        return Err(Error::parse(&lpath, lrows.len(), format!("expected {n} rows, found {}", lrows.len())));
    }
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in lrows.iter().enumerate() {
        let s = rec.get(0).unwrap_or("").trim();
        let l: usize = s
            .parse()
            .map_err(|_| Error::parse(&lpath, i + 1, format!("`{s}` is not a class id")))?;
        if l >= meta.num_classes {
            return Err(Error::parse(
                &lpath,
                i + 1,
                format!("label {l} outside [0, {})", meta.num_classes),
            ));
        }
        labels.push(l);
    }

    let spath = dir.join("splits.csv");
    let srows = records(&spath)?;
    if srows.len() != n {
        return Err(Error::parse(&spath, srows.len(), format!("expected {n} rows, found {}", srows.len())));
    }
    let mut split = Vec::with_capacity(n);
    for (i, rec) in srows.iter().enumerate() {
        let s = rec.get(0).unwrap_or("").trim();
        split.push(
            Split::parse(s).ok_or_else(|| Error::parse(&spath, i + 1, format!("unknown split tag `{s}`")))?,
        );
    }

    let mut g = Graph::new(n, edges, features, labels, split, Some(meta.num_classes))?;
    g.generator = meta.generator;
    Ok(g)
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut s = String::new();
    for &(u, v) in g.edges() {
        s.push_str(&format!("{u},{v}\n"));
    }
    write(&dir.join("edges.csv"), s)?;

    let mut s = String::new();
    for i in 0..g.num_nodes() {
        let row: Vec<String> = g.features().row(i).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write(&dir.join("features.csv"), s)?;

    let s: String = g.labels().iter().map(|l| format!("{l}\n")).collect();
    write(&dir.join("labels.csv"), s)?;
    let s: String = g.splits().iter().map(|t| format!("{}\n", t.as_str())).collect();
    write(&dir.join("splits.csv"), s)?;

    let meta = GraphMeta {
        num_nodes: g.num_nodes(),
        num_classes: g.num_classes(),
        feature_dim: g.feature_dim(),
        generator: g.generator.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write(&dir.join("meta.json"), json + "\n")
}

/// `u,v,weight` rows (with that header) for the given canonical edges.
pub fn write_subgraph_csv(path: impl AsRef<Path>, g: &Graph, edges: &[usize], weights: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if edges.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} edges but {} weights",
            edges.len(),
            weights.len()
        )));
    }
    let mut s = String::from("u,v,weight\n");
    for (&e, w) in edges.iter().zip(weights) {
        let (u, v) = g.edges()[e];
        s.push_str(&format!("{u},{v},{w:?}\n"));
    }
    write(path, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Graph {
        let feats = Matrix::from_rows(&[vec![0.1, -2.5], vec![1e-300, 3.0], vec![0.3333333333333333, 7.0]]).unwrap();
        Graph::new(3, [(0, 1), (1, 2)], feats, vec![0, 0, 1], vec![Split::Train, Split::Val, Split::Test], None)
            .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = small();
        save_graph(&g, dir.path()).unwrap();
        assert_eq!(load_graph(dir.path()).unwrap(), g);
    }

    #[test]
    fn missing_dir_names_path() {
        let err = load_graph("/nonexistent/graph-dir").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/graph-dir"));
    }

    #[test]
    fn bad_rows_are_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&small(), dir.path()).unwrap();
        let cases = [
            ("edges.csv", "0,1\n1,x\n", "not a node id"),
            ("edges.csv", "0,1\n1,9\n", ">= num_nodes"),
            ("edges.csv", "2,2\n", "self-loop"),
            ("features.csv", "0,0\nNaN,1\n0,0\n", "non-finite"),
            ("labels.csv", "0\n5\n1\n", "outside"),
            ("splits.csv", "train\nholdout\ntest\n", "unknown split"),
        ];
        for (file, body, needle) in cases {
            let d2 = tempfile::tempdir().unwrap();
            for f in ["edges.csv", "features.csv", "labels.csv", "splits.csv", "meta.json"] {
                fs::copy(dir.path().join(f), d2.path().join(f)).unwrap();
            }
            fs::write(d2.path().join(file), body).unwrap();
            let err = load_graph(d2.path()).unwrap_err().to_string();
            assert!(err.contains(needle), "{file}: {err}");
        }
    }

    #[test]
    fn subgraph_export_reloads_as_edges() {
        let dir = tempfile::tempdir().unwrap();
        let g = small();
        let p = dir.path().join("sub.csv");
        write_subgraph_csv(&p, &g, &[1], &[0.75]).unwrap();
        assert_eq!(load_edges(&p, 3).unwrap(), vec![(1, 2)]);
    }
}
