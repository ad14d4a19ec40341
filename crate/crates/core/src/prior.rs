//! Degree-proportionate edge prior and the locality partitioner used to
//! batch large graphs.
//!
//! Parts are grown by BFS from seeded random roots until they induce
//! `ceil(|E| / n)` edges, `n = ceil(|E| / cap)`. An edge cut by the
//! partition belongs to the part holding its lower-id endpoint, so every
//! edge is trained on exactly once per epoch. A part is trained on a
//! [`PartView`]: its own nodes plus the far endpoints of its cut edges
//! ("halo" nodes, which take part in message passing but not in losses).

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{rng_for, stream};

/// `p(u,v) ∝ 1/d_u + 1/d_v` over the canonical edges.
pub fn compute_prior(g: &Graph) -> Result<Vec<f64>> {
    if g.num_edges() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let raw: Vec<f64> = g
        .edges()
        .iter()
        .map(|&(u, v)| 1.0 / g.degree(u) as f64 + 1.0 / g.degree(v) as f64)
        .collect();
    Ok(normalized(raw))
}

pub(crate) fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

/// `p[idx]`, renormalized to sum to one.
pub fn restrict(p: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
    let sub: Vec<f64> = idx.iter().map(|&e| p[e]).collect();
    let s: f64 = sub.iter().sum();
    if !(s > 0.0) {
        return Err(Error::InsufficientSupport {
            requested: 1,
            available: 0,
        });
    }
    Ok(sub.into_iter().map(|x| x / s).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    /// Owned nodes, ascending.
    pub nodes: Vec<usize>,
    /// Assigned canonical edge ids, ascending.
    pub edges: Vec<usize>,
    /// Edges with exactly one endpoint in `nodes`, owned by this part or not.
    pub cut_edges: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub parts: Vec<Part>,
    /// Part id of every node.
    pub assignment: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Debug dump: `node_id,part_id` rows with that header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut s = String::from("node_id,part_id\n");
        for (u, p) in self.assignment.iter().enumerate() {
            s.push_str(&format!("{u},{p}\n"));
        }
        f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn partition_graph(g: &Graph, max_edges_per_part: usize, seed: u64) -> Result<Partition> {
    if max_edges_per_part == 0 {
        return Err(Error::InvalidArgument("max_edges_per_part must be >= 1".into()));
    }
    let n = g.num_nodes();
    let m = g.num_edges();
    let n_parts = m.div_ceil(max_edges_per_part).max(1);
    let mut assignment = vec![usize::MAX; n];

    if n_parts > 1 {
        let target = m.div_ceil(n_parts);
        let hard = 2 * max_edges_per_part;
        let mut roots: Vec<usize> = (0..n).collect();
        roots.shuffle(&mut rng_for(seed, &[stream::PARTITION]));
        let mut next_root = 0;
        // Neighbours of each node already placed in the part being grown.
        let mut inside = vec![0usize; n];
        for p in 0..n_parts - 1 {
            let mut induced = 0;
            let mut members = Vec::new();
            let mut queue = VecDeque::new();
            let mut queued = vec![false; n];
            'grow: while induced < target {
                let u = match queue.pop_front() {
                    Some(u) => u,
                    None => {
                        while next_root < n && assignment[roots[next_root]] != usize::MAX {
                            next_root += 1;
                        }
                        if next_root == n {
                            break 'grow;
                        }
                        next_root += 1;
                        roots[next_root - 1]
                    }
                };
                if assignment[u] != usize::MAX {
                    continue;
                }
                if induced + inside[u] > hard && !members.is_empty() {
                    // Would overshoot the slack; leave it for a later part.
                    continue;
                }
                assignment[u] = p;
                members.push(u);
                induced += inside[u];
                for &v in g.neighbors(u) {
                    inside[v] += 1;
                    if assignment[v] == usize::MAX && !queued[v] {
                        queued[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            for &u in &members {
                for &v in g.neighbors(u) {
                    inside[v] -= 1;
                }
            }
        }
    }
    for a in &mut assignment {
        if *a == usize::MAX {
            *a = n_parts - 1;
        }
    }

    let mut parts: Vec<Part> = (0..n_parts)
        .map(|_| Part {
            nodes: Vec::new(),
            edges: Vec::new(),
            cut_edges: 0,
        })
        .collect();
    for (u, &p) in assignment.iter().enumerate() {
        parts[p].nodes.push(u);
    }
    for (e, &(u, v)) in g.edges().iter().enumerate() {
        let (pu, pv) = (assignment[u], assignment[v]);
        parts[pu].edges.push(e);
        if pu != pv {
            parts[pu].cut_edges += 1;
            parts[pv].cut_edges += 1;
        }
    }
    Ok(Partition { parts, assignment })
}

/// A part as a standalone graph: owned nodes first, then halo nodes.
#[derive(Clone, Debug)]
pub struct PartView {
    pub graph: Graph,
    /// Local node id -> global node id.
    pub global_nodes: Vec<usize>,
    /// Local canonical edge id -> global canonical edge id.
    pub global_edges: Vec<usize>,
    /// Local node is owned by the part (false for halo nodes).
    pub owned: Vec<bool>,
}

impl PartView {
    /// The whole graph as a single part.
    pub fn whole(g: &Graph) -> Self {
        Self {
            graph: g.clone(),
            global_nodes: (0..g.num_nodes()).collect(),
            global_edges: (0..g.num_edges()).collect(),
            owned: vec![true; g.num_nodes()],
        }
    }

    pub fn new(g: &Graph, part: &Part) -> Result<Self> {
        let mut local = vec![usize::MAX; g.num_nodes()];
        let mut global_nodes = part.nodes.clone();
        for (i, &u) in part.nodes.iter().enumerate() {
            local[u] = i;
        }
        let owned_count = global_nodes.len();
        for &e in &part.edges {
            let (u, v) = g.edges()[e];
            for x in [u, v] {
                if local[x] == usize::MAX {
                    local[x] = global_nodes.len();
                    global_nodes.push(x);
                }
            }
        }
        let mut triples: Vec<(usize, usize, usize)> = part
            .edges
            .iter()
            .map(|&e| {
                let (u, v) = g.edges()[e];
                let (a, b) = (local[u], local[v]);
                (a.min(b), a.max(b), e)
            })
            .collect();
        triples.sort_unstable();
        let mut owned = vec![false; global_nodes.len()];
        owned[..owned_count].iter_mut().for_each(|o| *o = true);
        let graph = Graph::new(
            global_nodes.len(),
            triples.iter().map(|&(a, b, _)| (a, b)),
            g.features().gather_rows(&global_nodes),
            global_nodes.iter().map(|&u| g.labels()[u]).collect(),
            global_nodes.iter().map(|&u| g.splits()[u]).collect(),
            Some(g.num_classes()),
        )?;
        Ok(Self {
            graph,
            global_nodes,
            global_edges: triples.into_iter().map(|t| t.2).collect(),
            owned,
        })
    }

    /// Every part of `partition`, in part order.
    pub fn all(g: &Graph, partition: &Partition) -> Result<Vec<Self>> {
        if partition.len() == 1 {
            return Ok(vec![Self::whole(g)]);
        }
        partition.parts.iter().map(|p| Self::new(g, p)).collect()
    }

    pub fn is_whole(&self) -> bool {
        self.owned.iter().all(|&o| o) && self.global_nodes.iter().enumerate().all(|(i, &u)| i == u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::labelled;

    #[test]
    fn single_edge_prior() {
        let g = labelled(2, &[(0, 1)], &[0, 0]);
        assert_eq!(compute_prior(&g).unwrap(), vec![1.0]);
    }

    #[test]
    fn path_and_star() {
        let g = labelled(3, &[(0, 1), (1, 2)], &[0, 0, 0]);
        assert_eq!(compute_prior(&g).unwrap(), vec![0.5, 0.5]);
        let g = labelled(4, &[(0, 1), (0, 2), (0, 3)], &[0, 0, 0, 0]);
        for p in compute_prior(&g).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn small_graph_is_one_part() {
        let g = labelled(3, &[(0, 1), (1, 2)], &[0, 0, 0]);
        let p = partition_graph(&g, 10, 0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.parts[0].edges, vec![0, 1]);
        assert!(PartView::all(&g, &p).unwrap()[0].is_whole());
    }

    #[test]
    fn disjoint_cliques_split_cleanly() {
        let mut edges = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    edges.push((base + i, base + j));
                }
            }
        }
        let g = labelled(10, &edges, &[0; 10]);
        let p = partition_graph(&g, 10, 7).unwrap();
        assert_eq!(p.len(), 2);
        for part in &p.parts {
            assert_eq!(part.cut_edges, 0);
            assert_eq!(part.edges.len(), 10);
        }
    }

    #[test]
    fn view_maps_back_to_global() {
        let g = labelled(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)], &[0, 1, 0, 1, 0, 1]);
        let p = partition_graph(&g, 3, 2).unwrap();
        for part in &p.parts {
            let view = PartView::new(&g, part).unwrap();
            for (le, &(a, b)) in view.graph.edges().iter().enumerate() {
                let (u, v) = g.edges()[view.global_edges[le]];
                let (x, y) = (view.global_nodes[a], view.global_nodes[b]);
                assert_eq!((u, v), (x.min(y), x.max(y)));
            }
            assert_eq!(view.owned.iter().filter(|&&o| o).count(), part.nodes.len());
        }
    }
}
