//! Undirected attributed graphs.
//!
//! Edges are stored once in canonical `(u, v)` form with `u < v`, sorted.
//! Message passing uses a CSR over the symmetrized edge set in which every
//! slot also remembers the canonical edge id it came from.

mod generate;
mod homophily;
mod io;

pub use generate::{balanced_labels, gen_homophily_controlled, gen_moon_graph, MoonParams};
pub use homophily::{
    adjusted_homophily, edge_homophily, homophily_report, node_homophily, subgraph_edge_homophily,
    HomophilyReport,
};
pub use io::{load_edges, load_graph, save_graph, write_subgraph_csv, GraphMeta};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    slot_edge: Vec<usize>,
    features: Matrix,
    labels: Vec<usize>,
    split: Vec<Split>,
    /// Free-form provenance (generator parameters), kept in meta.json.
    pub generator: Option<serde_json::Value>,
}

impl Graph {
    /// Builds a graph, canonicalizing and deduplicating `edges`.
    ///
    /// `num_classes` defaults to `max(label) + 1`.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Vec<usize>,
        split: Vec<Split>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u},{v}) references a node >= {num_nodes}"
                )));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();

        if features.rows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidGraph("non-finite feature value".into()));
        }
        if labels.len() != num_nodes || split.len() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} labels and {} split tags for {num_nodes} nodes",
                labels.len(),
                split.len()
            )));
        }
        let inferred = labels.iter().max().map_or(0, |m| m + 1);
        let num_classes = num_classes.unwrap_or(inferred);
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidGraph(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }

        let mut deg = vec![0usize; num_nodes];
        for &(u, v) in &canon {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..num_nodes].to_vec();
        let mut targets = vec![0; offsets[num_nodes]];
        let mut slot_edge = vec![0; offsets[num_nodes]];
        for (e, &(u, v)) in canon.iter().enumerate() {
            targets[cursor[u]] = v;
            slot_edge[cursor[u]] = e;
            cursor[u] += 1;
            targets[cursor[v]] = u;
            slot_edge[cursor[v]] = e;
            cursor[v] += 1;
        }

        Ok(Self {
            num_nodes,
            num_classes,
            edges: canon,
            offsets,
            targets,
            slot_edge,
            features,
            labels,
            split,
            generator: None,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Canonical edges, sorted, `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.split
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn csr_targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|u| self.degree(u)).collect()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    /// Canonical edge ids parallel to [`Graph::neighbors`].
    pub fn neighbor_edges(&self, u: usize) -> &[usize] {
        &self.slot_edge[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn mask(&self, s: Split) -> Vec<bool> {
        self.split.iter().map(|&t| t == s).collect()
    }

    pub fn nodes_in(&self, s: Split) -> Vec<usize> {
        (0..self.num_nodes).filter(|&i| self.split[i] == s).collect()
    }

    /// Same nodes and attributes, different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(
            self.num_nodes,
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.split.clone(),
            Some(self.num_classes),
        )?;
        g.generator = self.generator.clone();
        Ok(g)
    }

    /// Graph induced on `nodes` (local id = position in `nodes`).
    pub fn induced(&self, nodes: &[usize]) -> Result<Self> {
        let mut local = vec![usize::MAX; self.num_nodes];
        for (i, &u) in nodes.iter().enumerate() {
            local[u] = i;
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| local[u] != usize::MAX && local[v] != usize::MAX)
            .map(|&(u, v)| (local[u], local[v]));
        Self::new(
            nodes.len(),
            edges,
            self.features.gather_rows(nodes),
            nodes.iter().map(|&u| self.labels[u]).collect(),
            nodes.iter().map(|&u| self.split[u]).collect(),
            Some(self.num_classes),
        )
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn labelled(n: usize, edges: &[(usize, usize)], labels: &[usize]) -> Graph {
        Graph::new(
            n,
            edges.iter().copied(),
            Matrix::zeros(n, 1),
            labels.to_vec(),
            vec![Split::Train; n],
            None,
        )
        .unwrap()
    }

    #[test]
    fn path_degrees() {
        let g = Graph::new(
            3,
            [(0, 1), (2, 1)],
            Matrix::zeros(3, 2),
            vec![0, 0, 1],
            vec![Split::Train, Split::Val, Split::Test],
            None,
        )
        .unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.num_classes(), 2);
    }

    #[test]
    fn reversed_duplicate_collapses() {
        let g = labelled(2, &[(0, 1), (1, 0)], &[0, 0]);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn self_loop_rejected() {
        let r = Graph::new(6, [(5, 5)], Matrix::zeros(6, 1), vec![0; 6], vec![Split::Train; 6], None);
        assert!(matches!(r, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn csr_slots_point_at_edges() {
        let g = labelled(4, &[(0, 1), (1, 2), (2, 3), (0, 3)], &[0, 1, 0, 1]);
        for u in 0..4 {
            for (&v, &e) in g.neighbors(u).iter().zip(g.neighbor_edges(u)) {
                let (a, b) = g.edges()[e];
                assert!((a, b) == (u.min(v), u.max(v)));
            }
        }
    }

    #[test]
    fn induced_keeps_internal_edges() {
        let g = labelled(4, &[(0, 1), (1, 2), (2, 3)], &[0, 1, 0, 1]);
        let h = g.induced(&[1, 2, 3]).unwrap();
        assert_eq!(h.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(h.labels(), &[1, 0, 1]);
    }
}
