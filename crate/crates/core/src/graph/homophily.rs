//! Label-agreement statistics.

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub node_homophily: f64,
    pub edge_homophily: f64,
    pub adjusted_homophily: f64,
    pub is_heterophilic: bool,
}

/// Mean over non-isolated nodes of the fraction of same-label neighbours.
/// Returns 0 when every node is isolated.
pub fn node_homophily(g: &Graph) -> f64 {
    let labels = g.labels();
    let mut total = 0.0;
    let mut counted = 0usize;
    for u in 0..g.num_nodes() {
        let nb = g.neighbors(u);
        if nb.is_empty() {
            continue;
        }
        let same = nb.iter().filter(|&&v| labels[v] == labels[u]).count();
        total += same as f64 / nb.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

pub fn edge_homophily(g: &Graph) -> Result<f64> {
    let all: Vec<usize> = (0..g.num_edges()).collect();
    subgraph_edge_homophily(g, &all)
}

/// Edge homophily restricted to the canonical edge ids in `edges`.
pub fn subgraph_edge_homophily(g: &Graph, edges: &[usize]) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    let labels = g.labels();
    let mut same = 0usize;
    for &e in edges {
        let &(u, v) = g.edges().get(e).ok_or_else(|| {
            Error::InvalidArgument(format!("edge id {e} out of range for {} edges", g.num_edges()))
        })?;
        if labels[u] == labels[v] {
            same += 1;
        }
    }
    Ok(same as f64 / edges.len() as f64)
}

/// Edge homophily corrected for the agreement expected from class degree
/// totals alone: `(h_e - sum_k p_k²) / (1 - sum_k p_k²)` with
/// `p_k = D_k / 2|E|`. Returns 0 when the denominator vanishes.
pub fn adjusted_homophily(g: &Graph) -> Result<f64> {
    let h_e = edge_homophily(g)?;
    let mut d = vec![0.0; g.num_classes()];
    for u in 0..g.num_nodes() {
        d[g.labels()[u]] += g.degree(u) as f64;
    }
    let two_m = 2.0 * g.num_edges() as f64;
    let chance: f64 = d.iter().map(|dk| (dk / two_m).powi(2)).sum();
    let denom = 1.0 - chance;
    if denom.abs() < 1e-12 {
        return Ok(0.0);
    }
    Ok((h_e - chance) / denom)
}

pub fn homophily_report(g: &Graph) -> Result<HomophilyReport> {
    let adjusted = adjusted_homophily(g)?;
    Ok(HomophilyReport {
        node_homophily: node_homophily(g),
        edge_homophily: edge_homophily(g)?,
        adjusted_homophily: adjusted,
        is_heterophilic: adjusted <= 0.5,
    })
}
