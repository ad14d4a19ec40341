//! Synthetic graphs with controlled label structure.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Graph, Split};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream, Rng};
use crate::tensor::Matrix;

/// `n` labels cycling through `0..c`.
pub fn balanced_labels(n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|i| i % c.max(1)).collect()
}

/// Seeded permutation split into train / val / test by the given fractions.
fn random_split(n: usize, train: f64, val: f64, rng: &mut Rng) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (train * n as f64).round() as usize;
    let n_val = (val * n as f64).round() as usize;
    let mut split = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_train {
            split[i] = Split::Train;
        } else if rank < n_train + n_val {
            split[i] = Split::Val;
        }
    }
    split
}

/// Every node initiates `d` edges: `ceil(d * target_h)` to uniformly chosen
/// same-label nodes and the rest to uniformly chosen nodes of any label.
/// Repeats and self-loops are redrawn; a slot whose candidates are all
/// neighbours already is skipped, so small dense classes can end up with
/// fewer than `n d` edges. Features are the one-hot class
/// direction plus unit Gaussian noise; the split is 20/40/40.
pub fn gen_homophily_controlled(
    labels: &[usize],
    d: usize,
    target_h: f64,
    feature_dim: usize,
    seed: u64,
) -> Result<Graph> {
    if !(0.0..=1.0).contains(&target_h) {
        return Err(Error::InvalidArgument(format!("target_h {target_h} outside [0,1]")));
    }
    let n = labels.len();
    let c = labels.iter().max().map_or(0, |m| m + 1);
    if feature_dim < c {
        return Err(Error::InvalidArgument(format!(
            "feature_dim {feature_dim} is smaller than the {c} classes"
        )));
    }
    let mut members = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    if let Some((k, m)) = members.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < d + 1) {
        return Err(Error::InvalidArgument(format!(
            "class {k} has {} members, needs at least {} for degree {d}",
            m.len(),
            d + 1
        )));
    }
    if n < d + 1 {
        return Err(Error::InvalidArgument(format!("{n} nodes cannot supply degree {d}")));
    }

    let mut rng = rng_for(seed, &[stream::INIT]);
    let same = ((d as f64) * target_h - 1e-9).ceil().max(0.0) as usize;
    let same = same.min(d);
    let mut adj: Vec<std::collections::HashSet<usize>> = vec![Default::default(); n];
    let mut edges = Vec::with_capacity(n * d);
    let cap = 1000 * d.max(1);
    for u in 0..n {
        for j in 0..d {
            let pool: &[usize] = if j < same { &members[labels[u]] } else { &[] };
            let free = |v: &usize| *v != u && !adj[u].contains(v);
            let mut pick = None;
            for _ in 0..cap {
                let v = if pool.is_empty() {
                    rng.random_range(0..n)
                } else {
                    pool[rng.random_range(0..pool.len())]
                };
                if free(&v) {
                    pick = Some(v);
                    break;
                }
            }
            if pick.is_none() {
                let left: Vec<usize> = if pool.is_empty() {
                    (0..n).filter(free).collect()
                } else {
                    pool.iter().copied().filter(free).collect()
                };
                // Every candidate is already linked to `u`: the slot is
                // covered by an edge some other node initiated.
                if left.is_empty() {
                    continue;
                }
                pick = Some(left[rng.random_range(0..left.len())]);
            }
            let v = pick.expect("set above");
            adj[u].insert(v);
            adj[v].insert(u);
            edges.push((u, v));
        }
    }

    let mut frng = rng_for(seed, &[stream::INIT, 1]);
    let features = Matrix::from_fn(n, feature_dim, |i, j| {
        let mean = if j == labels[i] { 1.0 } else { 0.0 };
        let z: f64 = StandardNormal.sample(&mut frng);
        mean + z
    });
    let split = random_split(n, 0.2, 0.4, &mut rng_for(seed, &[stream::SPLIT]));
    let mut g = Graph::new(n, edges, features, labels.to_vec(), split, Some(c))?;
    g.generator = Some(json!({
        "kind": "homophily_controlled",
        "degree": d,
        "target_h": target_h,
        "feature_dim": feature_dim,
        "feature_model": "one-hot class mean + N(0,1)",
        "seed": seed,
    }));
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoonParams {
    pub n_nodes: usize,
    pub noise: f64,
    pub k_nn: usize,
    pub bridge_fraction: f64,
    pub seed: u64,
}

impl Default for MoonParams {
    /// 150 nodes, about 870 edges, 68% of them crossing between moons.
    fn default() -> Self {
        Self {
            n_nodes: 150,
            noise: 0.1,
            k_nn: 3,
            bridge_fraction: 0.68,
            seed: 0,
        }
    }
}

impl MoonParams {
    pub fn generate(&self) -> Result<Graph> {
        gen_moon_graph(self.n_nodes, self.noise, self.k_nn, self.bridge_fraction, self.seed)
    }
}

/// Two interleaved noisy half-circles. Each node links to its `k_nn`
/// nearest neighbours on its own moon, then uniformly random cross-moon
/// pairs are added until they make up `bridge_fraction` of all edges.
/// With `bridge_fraction == 1` there are no moon-internal edges and each
/// node instead starts `k_nn` random cross edges. Split is 30/10/60.
pub fn gen_moon_graph(n_nodes: usize, noise: f64, k_nn: usize, bridge_fraction: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&bridge_fraction) {
        return Err(Error::InvalidArgument(format!(
            "bridge_fraction {bridge_fraction} outside [0,1]"
        )));
    }
    if n_nodes < 4 || !n_nodes.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("n_nodes must be even and >= 4, got {n_nodes}")));
    }
    if k_nn < 2 || k_nn >= n_nodes / 2 {
        return Err(Error::InvalidArgument(format!(
            "k_nn must be in [2, {}), got {k_nn}",
            n_nodes / 2
        )));
    }
    let m = n_nodes / 2;
    let mut rng = rng_for(seed, &[stream::INIT]);
    let mut pts = Vec::with_capacity(n_nodes);
    for moon in 0..2 {
        for i in 0..m {
            let t = std::f64::consts::PI * i as f64 / (m - 1) as f64;
            let (x, y) = if moon == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            pts.push([x + noise * nx, y + noise * ny]);
        }
    }
    let labels: Vec<usize> = (0..n_nodes).map(|i| i / m).collect();

    let mut set = std::collections::BTreeSet::new();
    if bridge_fraction < 1.0 {
        for u in 0..n_nodes {
            let base = (u / m) * m;
            let mut cand: Vec<(f64, usize)> = (base..base + m)
                .filter(|&v| v != u)
                .map(|v| {
                    let dx = pts[u][0] - pts[v][0];
                    let dy = pts[u][1] - pts[v][1];
                    (dx * dx + dy * dy, v)
                })
                .collect();
            cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &(_, v) in cand.iter().take(k_nn) {
                set.insert((u.min(v), u.max(v)));
            }
        }
        let intra = set.len();
        let want = if bridge_fraction == 0.0 {
            0
        } else {
            (bridge_fraction * intra as f64 / (1.0 - bridge_fraction) - 1e-9).ceil() as usize
        };
        if want > m * m {
            return Err(Error::InvalidArgument(format!(
                "bridge_fraction {bridge_fraction} needs {want} cross edges, only {} exist",
                m * m
            )));
        }
        let mut added = 0;
        while added < want {
            let u = rng.random_range(0..m);
            let v = m + rng.random_range(0..m);
            if set.insert((u, v)) {
                added += 1;
            }
        }
    } else {
        for u in 0..n_nodes {
            let other = if u < m { m } else { 0 };
            let mut placed = 0;
            while placed < k_nn {
                let v = other + rng.random_range(0..m);
                if set.insert((u.min(v), u.max(v))) {
                    placed += 1;
                }
            }
        }
    }

    let features = Matrix::from_fn(n_nodes, 2, |i, j| pts[i][j]);
    let split = random_split(n_nodes, 0.3, 0.1, &mut rng_for(seed, &[stream::SPLIT]));
    let mut g = Graph::new(n_nodes, set, features, labels, split, Some(2))?;
    g.generator = Some(json!({
        "kind": "moon",
        "n_nodes": n_nodes,
        "noise": noise,
        "k_nn": k_nn,
        "bridge_fraction": bridge_fraction,
        "seed": seed,
    }));
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{edge_homophily, node_homophily};

    #[test]
    fn full_homophily_is_exact() {
        let g = gen_homophily_controlled(&balanced_labels(200, 4), 5, 1.0, 4, 3).unwrap();
        assert_eq!(edge_homophily(&g).unwrap(), 1.0);
    }

    #[test]
    fn forty_percent_forced_two_classes() {
        let g = gen_homophily_controlled(&balanced_labels(1000, 2), 10, 0.4, 2, 11).unwrap();
        let h = node_homophily(&g);
        assert!((h - 0.7).abs() < 0.1, "{h}");
    }

    #[test]
    fn tiny_class_rejected() {
        let labels = [0, 0, 0, 1, 1, 1, 1, 1];
        assert!(gen_homophily_controlled(&labels, 3, 0.5, 2, 0).is_err());
        assert!(gen_homophily_controlled(&balanced_labels(40, 2), 3, 0.5, 1, 0).is_err());
    }

    #[test]
    fn moon_defaults_hit_published_statistics() {
        let g = MoonParams::default().generate().unwrap();
        let he = edge_homophily(&g).unwrap();
        assert!((he - 0.32).abs() <= 0.05, "h_e = {he}");
        assert!((g.num_edges() as f64 - 870.0).abs() <= 60.0, "|E| = {}", g.num_edges());
        assert_eq!(g.labels().iter().filter(|&&l| l == 0).count(), 75);
    }

    #[test]
    fn moon_without_bridges_is_pure() {
        let g = gen_moon_graph(150, 0.1, 3, 0.0, 1).unwrap();
        assert_eq!(edge_homophily(&g).unwrap(), 1.0);
        assert!(gen_moon_graph(150, 0.1, 3, 1.5, 1).is_err());
    }
}
