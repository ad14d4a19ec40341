//! Drawing sparse edge sets from a distribution.
//!
//! Subgraphs need distinct edges, so the default draw is sequential
//! without replacement: a sum tree holds the remaining mass and each pick
//! zeroes its leaf. Draws with replacement are kept for the Monte Carlo
//! bound checks, which are stated for that scheme.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// `lambda * p + (1 - lambda) * prior`, elementwise.
pub fn augment_with_prior(p: &[f64], prior: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0,1]")));
    }
    if p.len() != prior.len() {
        return Err(Error::InvalidArgument(format!(
            "distribution has {} entries, prior has {}",
            p.len(),
            prior.len()
        )));
    }
    Ok(p.iter()
        .zip(prior)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect())
}

/// Complete binary tree of partial sums; parents are recomputed from their
/// children, never updated by subtraction, so zeroed leaves stay zero.
struct SumTree {
    size: usize,
    tree: Vec<f64>,
}

impl SumTree {
    fn new(w: &[f64]) -> Self {
        let size = w.len().next_power_of_two().max(1);
        let mut tree = vec![0.0; 2 * size];
        tree[size..size + w.len()].copy_from_slice(w);
        for i in (1..size).rev() {
            tree[i] = tree[2 * i] + tree[2 * i + 1];
        }
        Self { size, tree }
    }

    fn total(&self) -> f64 {
        self.tree[1]
    }

    fn zero(&mut self, leaf: usize) {
        let mut i = self.size + leaf;
        self.tree[i] = 0.0;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1];
        }
    }

    /// Leaf holding the cumulative mass `target`; only enters subtrees
    /// with positive mass.
    fn find(&self, mut target: f64) -> usize {
        let mut i = 1;
        while i < self.size {
            let (l, r) = (self.tree[2 * i], self.tree[2 * i + 1]);
            if target < l || r <= 0.0 {
                i *= 2;
            } else {
                target -= l;
                i = 2 * i + 1;
            }
        }
        i - self.size
    }
}

fn check_weights(dist: &[f64]) -> Result<usize> {
    if let Some(bad) = dist.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidArgument(format!("invalid probability {bad}")));
    }
    Ok(dist.iter().filter(|&&p| p > 0.0).count())
}

/// `k` distinct indices, drawn one at a time proportionally to the mass
/// left after removing earlier picks. Returned in draw order.
pub fn sample_multinomial_k(dist: &[f64], k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let available = check_weights(dist)?;
    if k > available {
        return Err(Error::InsufficientSupport {
            requested: k,
            available,
        });
    }
    let mut tree = SumTree::new(dist);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let target = rng.random::<f64>() * tree.total();
        let i = tree.find(target);
        tree.zero(i);
        out.push(i);
    }
    Ok(out)
}

/// `k` independent draws (repeats allowed), as an ordered sequence.
pub fn sample_with_replacement(dist: &[f64], k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let w = WeightedIndex::new(dist).map_err(|e| Error::InvalidArgument(format!("weights: {e}")))?;
    Ok((0..k).map(|_| w.sample(rng)).collect())
}

/// A standard Gumbel variate `-ln(-ln U)`.
pub fn gumbel(rng: &mut Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -(-u.ln()).ln();
        }
    }
}

/// Indices of the `k` largest `(ln p_e + g_e) / T`. With `noise == false`
/// every `g_e` is 0. Zero-probability entries rank last. Ascending output.
pub fn sample_gumbel_topk(p: &[f64], k: usize, t: f64, noise: bool, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {t} must be positive")));
    }
    if k > p.len() {
        return Err(Error::InsufficientSupport {
            requested: k,
            available: p.len(),
        });
    }
    check_weights(p)?;
    let mut keys: Vec<(f64, usize)> = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            let g = if noise { gumbel(rng) } else { 0.0 };
            ((pi.ln() + g) / t, i)
        })
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < keys.len() && k > 0 {
        keys.select_nth_unstable_by(k - 1, by_key);
    }
    let mut out: Vec<usize> = keys[..k].iter().map(|x| x.1).collect();
    out.sort_unstable();
    Ok(out)
}

/// A sampled edge set together with the scores it carries downstream.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSubgraph {
    pub edge_indices: Vec<usize>,
    pub edge_weights: Vec<f64>,
}

/// Pairs `indices` with `raw_scores[indices]`.
pub fn build_subgraph(num_edges: usize, indices: &[usize], raw_scores: &[f64]) -> Result<SparseSubgraph> {
    if indices.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    let mut seen = vec![false; num_edges];
    for &e in indices {
        if e >= num_edges || e >= raw_scores.len() {
            return Err(Error::InvalidArgument(format!("edge index {e} out of range")));
        }
        if std::mem::replace(&mut seen[e], true) {
            return Err(Error::InvalidArgument(format!("edge index {e} repeated")));
        }
    }
    Ok(SparseSubgraph {
        edge_indices: indices.to_vec(),
        edge_weights: indices.iter().map(|&e| raw_scores[e]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn augmentation_examples() {
        assert_eq!(augment_with_prior(&[1.0, 0.0], &[0.5, 0.5], 0.5).unwrap(), vec![0.75, 0.25]);
        assert_eq!(augment_with_prior(&[0.3, 0.7], &[0.5, 0.5], 1.0).unwrap(), vec![0.3, 0.7]);
        assert_eq!(augment_with_prior(&[0.3, 0.7], &[0.5, 0.5], 0.0).unwrap(), vec![0.5, 0.5]);
        assert!(augment_with_prior(&[1.0], &[1.0], 1.1).is_err());
    }

    #[test]
    fn one_hot_and_exhaustion() {
        let mut rng = rng_from_seed(1);
        assert_eq!(sample_multinomial_k(&[0.0, 1.0, 0.0], 1, &mut rng).unwrap(), vec![1]);
        let mut all = sample_multinomial_k(&[0.2; 5], 5, &mut rng).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(matches!(
            sample_multinomial_k(&[0.5, 0.5, 0.0], 3, &mut rng),
            Err(Error::InsufficientSupport { requested: 3, available: 2 })
        ));
    }

    #[test]
    fn single_draw_frequencies() {
        let p = [0.7, 0.2, 0.1];
        let mut rng = rng_from_seed(9);
        let trials = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..trials {
            counts[sample_multinomial_k(&p, 1, &mut rng).unwrap()[0]] += 1;
        }
        for i in 0..3 {
            let sigma = (trials as f64 * p[i] * (1.0 - p[i])).sqrt();
            assert!((counts[i] as f64 - trials as f64 * p[i]).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn gumbel_without_noise_is_topk() {
        let mut rng = rng_from_seed(0);
        let p = [0.1, 0.4, 0.05, 0.3, 0.15];
        assert_eq!(sample_gumbel_topk(&p, 2, 0.7, false, &mut rng).unwrap(), vec![1, 3]);
        assert_eq!(sample_gumbel_topk(&p, 5, 0.7, true, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn subgraph_checks() {
        let s = build_subgraph(3, &[2, 0], &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(s.edge_weights, vec![0.3, 0.1]);
        assert!(build_subgraph(3, &[], &[0.1; 3]).is_err());
        assert!(build_subgraph(3, &[3], &[0.1; 3]).is_err());
        assert!(build_subgraph(3, &[1, 1], &[0.1; 3]).is_err());
    }
}
