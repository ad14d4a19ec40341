//! Fixed edge distributions, classification metrics and sparsity sweeps.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::prior::{compute_prior, normalized};
use crate::train::{evaluate, train};

pub fn random_distribution(g: &Graph) -> Result<Vec<f64>> {
    if g.num_edges() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    Ok(vec![1.0 / g.num_edges() as f64; g.num_edges()])
}

/// Same form as the training prior: `∝ 1/d_u + 1/d_v`.
pub fn degree_weighted_distribution(g: &Graph) -> Result<Vec<f64>> {
    compute_prior(g)
}

pub fn effective_resistance_distribution(g: &Graph, cap: usize) -> Result<Vec<f64>> {
    let r = effective_resistances(g, cap)?;
    if r.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    Ok(normalized(r))
}

/// Sampling distribution for a fixed method. `FullGraph` gets the uniform
/// vector, though it never samples.
pub fn fixed_distribution(g: &Graph, method: Method, er_cap: usize) -> Result<Vec<f64>> {
    match method {
        Method::Random | Method::FullGraph => random_distribution(g),
        Method::Degree => degree_weighted_distribution(g),
        Method::EffectiveResistance => effective_resistance_distribution(g, er_cap),
        Method::Learned => Err(Error::InvalidArgument("learned distribution is not fixed".into())),
    }
}

/// `R(u,v) = (e_u - e_v)ᵀ L⁺ (e_u - e_v)` for every canonical edge, with
/// `L⁺` from a dense eigendecomposition. Bridges are set to exactly 1.
pub fn effective_resistances(g: &Graph, cap: usize) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    if n > cap {
        return Err(Error::ErCapExceeded { nodes: n, cap });
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    for &(u, v) in g.edges() {
        lap[(u, v)] -= 1.0;
        lap[(v, u)] -= 1.0;
        lap[(u, u)] += 1.0;
        lap[(v, v)] += 1.0;
    }
    let eig = SymmetricEigen::new(lap);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let tol = 1e-9 * lmax.max(1.0);
    let mut pinv = DMatrix::<f64>::zeros(n, n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let v = eig.eigenvectors.column(i);
            pinv += (v * v.transpose()) / lambda;
        }
    }
    let bridge = bridges(g);
    Ok(g.edges()
        .iter()
        .enumerate()
        .map(|(e, &(u, v))| {
            if bridge[e] {
                1.0
            } else {
                pinv[(u, u)] + pinv[(v, v)] - 2.0 * pinv[(u, v)]
            }
        })
        .collect())
}

/// Bridge flags per canonical edge (iterative low-link DFS).
pub fn bridges(g: &Graph) -> Vec<bool> {
    let n = g.num_nodes();
    let mut is_bridge = vec![false; g.num_edges()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut time = 0;
    // (node, edge id used to enter, next neighbour slot)
    let mut stack: Vec<(usize, usize, usize)> = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = time;
        low[root] = time;
        time += 1;
        stack.push((root, usize::MAX, 0));
        while let Some(&mut (u, via, ref mut slot)) = stack.last_mut() {
            let nbrs = g.neighbors(u);
            if *slot < nbrs.len() {
                let (v, e) = (nbrs[*slot], g.neighbor_edges(u)[*slot]);
                *slot += 1;
                if e == via {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = time;
                    low[v] = time;
                    time += 1;
                    stack.push((v, e, 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[u]);
                    if low[u] > disc[p] {
                        is_bridge[via] = true;
                    }
                }
            }
        }
    }
    is_bridge
}

/// Connected components (isolated nodes count).
pub fn num_components(g: &Graph) -> usize {
    let n = g.num_nodes();
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &v in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

fn masked(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<Vec<(usize, usize)>> {
    if pred.len() != truth.len() || mask.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "lengths differ: pred {}, truth {}, mask {}",
            pred.len(),
            truth.len(),
            mask.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..mask.len()).filter(|&i| mask[i]).map(|i| (pred[i], truth[i])).collect();
    if pairs.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(pairs)
}

/// Accuracy over the mask.
pub fn micro_f1(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<f64> {
    let pairs = masked(pred, truth, mask)?;
    Ok(pairs.iter().filter(|(p, t)| p == t).count() as f64 / pairs.len() as f64)
}

/// Mean per-class F1 over classes present in truth or prediction.
pub fn macro_f1(pred: &[usize], truth: &[usize], mask: &[bool]) -> Result<f64> {
    let pairs = masked(pred, truth, mask)?;
    let c = pairs.iter().map(|&(p, t)| p.max(t)).max().unwrap_or(0) + 1;
    let (mut tp, mut fp, mut fneg) = (vec![0usize; c], vec![0usize; c], vec![0usize; c]);
    for &(p, t) in &pairs {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for k in 0..c {
        let denom = 2 * tp[k] + fp[k] + fneg[k];
        if denom == 0 {
            continue;
        }
        present += 1;
        sum += 2.0 * tp[k] as f64 / denom as f64;
    }
    Ok(sum / present as f64)
}

/// One (method, q, seed) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub q: f64,
    pub seed: u64,
    pub test_micro_f1: f64,
    pub test_macro_f1: f64,
    pub epochs_to_converge: usize,
    pub subgraph_edge_homophily: f64,
}

/// Trains every (method, q, seed) combination from `base` and evaluates
/// the selected checkpoint on the test split.
pub fn sweep_sparsity(
    g: &Graph,
    methods: &[Method],
    qs: &[f64],
    seeds: &[u64],
    base: &RunConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &method in methods {
        for &q in qs {
            for &seed in seeds {
                let cfg = RunConfig {
                    method,
                    q,
                    seed,
                    ..base.clone()
                };
                let run = train(g, &cfg)?;
                let eval = evaluate(&run.state, g, &cfg)?;
                rows.push(SweepRow {
                    method,
                    q,
                    seed,
                    test_micro_f1: eval.test_micro_f1,
                    test_macro_f1: eval.test_macro_f1,
                    epochs_to_converge: run.epochs_to_converge,
                    subgraph_edge_homophily: eval.subgraph_edge_homophily,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean test micro-F1 per (h, q), one row per `h`, one column per `q`.
pub fn write_heatmap_csv(path: impl AsRef<Path>, cells: &[(f64, SweepRow)]) -> Result<()> {
    let path = path.as_ref();
    let mut hs: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let mut qs: Vec<f64> = cells.iter().map(|c| c.1.q).collect();
    for v in [&mut hs, &mut qs] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let mut out = String::from("h");
    for q in &qs {
        out.push_str(&format!(",q{q}"));
    }
    out.push('\n');
    for &h in &hs {
        out.push_str(&format!("{h}"));
        for &q in &qs {
            let vals: Vec<f64> = cells
                .iter()
                .filter(|c| c.0 == h && c.1.q == q)
                .map(|c| c.1.test_micro_f1)
                .collect();
            if vals.is_empty() {
                out.push(',');
            } else {
                out.push_str(&format!(",{}", vals.iter().sum::<f64>() / vals.len() as f64));
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
