//! Training losses.
//!
//! - cross-entropy on labelled nodes
//! - assortativity: binary cross-entropy between edge scores and label
//!   agreement, over edges whose endpoints are both training nodes
//! - consistency: `|w_e - cos(h_u, h_v)|` over sampled edges
//!
//! Assortativity and consistency average by default (`sum_reduction`
//! switches to sums). The one-sided assortativity form drops the
//! different-label term.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for a in [self.alpha1, self.alpha2, self.alpha3] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidArgument(format!("loss weight {a} outside [0,1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub assor: f64,
    pub cons: f64,
    pub total: f64,
}

/// Cross-entropy over `nodes`.
pub fn cross_entropy_var(tape: &mut Tape, probs: Var, labels: &[usize], nodes: &[usize]) -> Result<Var> {
    let targets: Vec<(usize, usize)> = nodes.iter().map(|&i| (i, labels[i])).collect();
    tape.cross_entropy(probs, Arc::new(targets))
}

/// Assortativity loss over edges `(us[e], vs[e])` with scores `scores`
/// (`|E| x 1`); only edges with both endpoints in `train` count.
#[allow(clippy::too_many_arguments)]
pub fn assortativity_var(
    tape: &mut Tape,
    scores: Var,
    edges: &[(usize, usize)],
    labels: &[usize],
    train: &[bool],
    one_sided: bool,
    sum_reduction: bool,
) -> Result<Var> {
    let mut idx = Vec::new();
    let mut targets = Vec::new();
    for (e, &(u, v)) in edges.iter().enumerate() {
        if train[u] && train[v] {
            idx.push(e);
            targets.push(if labels[u] == labels[v] { 1.0 } else { 0.0 });
        }
    }
    if idx.is_empty() {
        return Ok(tape.leaf(Matrix::scalar(0.0)));
    }
    let w = tape.gather_rows(scores, Arc::new(idx))?;
    tape.bce(w, Arc::new(targets), one_sided, !sum_reduction)
}

/// Consistency loss for sampled weights `w` (`k x 1`) against the cosine
/// of the endpoint embeddings in `hidden`.
pub fn consistency_var(
    tape: &mut Tape,
    w: Var,
    hidden: Var,
    sampled: &[(usize, usize)],
    sum_reduction: bool,
) -> Result<Var> {
    if sampled.is_empty() {
        return Ok(tape.leaf(Matrix::scalar(0.0)));
    }
    let us = Arc::new(sampled.iter().map(|e| e.0).collect());
    let vs = Arc::new(sampled.iter().map(|e| e.1).collect());
    let hu = tape.gather_rows(hidden, us)?;
    let hv = tape.gather_rows(hidden, vs)?;
    let cos = tape.row_cosine(hu, hv)?;
    let d = tape.sub(w, cos)?;
    let a = tape.abs(d);
    Ok(if sum_reduction { tape.sum(a) } else { tape.mean(a) })
}

/// `alpha1 ce + alpha2 assor + alpha3 cons` on the tape, plus the values.
pub fn total_var(
    tape: &mut Tape,
    ce: Var,
    assor: Var,
    cons: Var,
    weights: &LossWeights,
) -> Result<(Var, LossBreakdown)> {
    let a = tape.scale(ce, weights.alpha1);
    let b = tape.scale(assor, weights.alpha2);
    let c = tape.scale(cons, weights.alpha3);
    let ab = tape.add(a, b)?;
    let t = tape.add(ab, c)?;
    let v = |x: Var| tape.value(x).as_slice()[0];
    let breakdown = LossBreakdown {
        ce: v(ce),
        assor: v(assor),
        cons: v(cons),
        total: v(t),
    };
    Ok((t, breakdown))
}

/// Plain-value combination.
pub fn total_loss(ce: f64, assor: f64, cons: f64, weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    Ok(LossBreakdown {
        ce,
        assor,
        cons,
        total: weights.alpha1 * ce + weights.alpha2 * assor + weights.alpha3 * cons,
    })
}

/// `-(1/|M|) sum_{v in M} ln max(p[v, y_v], 1e-12)`
pub fn cross_entropy(probs: &Matrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    let nodes: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let mut tape = Tape::new();
    let p = tape.leaf(probs.clone());
    let l = cross_entropy_var(&mut tape, p, labels, &nodes)?;
    Ok(tape.value(l).as_slice()[0])
}

pub fn assortativity_loss(
    raw_scores: &[f64],
    edges: &[(usize, usize)],
    labels: &[usize],
    train_mask: &[bool],
    one_sided: bool,
    sum_reduction: bool,
) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.leaf(Matrix::column(raw_scores.to_vec()));
    let l = assortativity_var(&mut tape, s, edges, labels, train_mask, one_sided, sum_reduction)?;
    Ok(tape.value(l).as_slice()[0])
}

pub fn consistency_loss(
    sampled_scores: &[f64],
    hidden: &Matrix,
    sampled_edges: &[(usize, usize)],
    sum_reduction: bool,
) -> Result<f64> {
    let mut tape = Tape::new();
    let w = tape.leaf(Matrix::column(sampled_scores.to_vec()));
    let h = tape.leaf(hidden.clone());
    let l = consistency_var(&mut tape, w, h, sampled_edges, sum_reduction)?;
    Ok(tape.value(l).as_slice()[0])
}
