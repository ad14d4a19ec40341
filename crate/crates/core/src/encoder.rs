//! Edge scorer.
//!
//! A small GCN embeds the nodes of a part using a structural subgraph of
//! `floor(q|E|/100)` prior-sampled edges; an MLP then scores every edge as
//!
//! ```text
//! w(u,v) = sigmoid( relu([h_u - h_v ; h_u ⊙ h_v] W1 + b1) W2 + b2 )
//! ```
//!
//! `W1` is stored as its two row blocks so `(h_u - h_v) W_diff` can be
//! computed as `(H W_diff)[u] - (H W_diff)[v]`, one `|V| x H` product
//! instead of an `|E| x H` one.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{budget, SamplingMode};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::Rng;
use crate::sampler::sample_multinomial_k;
use crate::tensor::{Matrix, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub gcn: Vec<Matrix>,
    pub w_diff: Matrix,
    pub w_prod: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

/// Tape slots of an [`EncoderParams`], in [`EncoderParams::tensors`] order.
#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub gcn: Vec<Var>,
    pub w_diff: Var,
    pub w_prod: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl EncoderVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = self.gcn.clone();
        v.extend([self.w_diff, self.w_prod, self.b1, self.w2, self.b2]);
        v
    }
}

impl EncoderParams {
    pub fn new(features: usize, hidden: usize, layers: usize, rng: &mut Rng) -> Self {
        let mut gcn = Vec::with_capacity(layers);
        for l in 0..layers {
            let fan_in = if l == 0 { features } else { hidden };
            gcn.push(Matrix::glorot(fan_in, hidden, fan_in, hidden, rng));
        }
        Self {
            gcn,
            w_diff: Matrix::glorot(hidden, hidden, 2 * hidden, hidden, rng),
            w_prod: Matrix::glorot(hidden, hidden, 2 * hidden, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::glorot(hidden, 1, hidden, 1, rng),
            b2: Matrix::zeros(1, 1),
        }
    }

    pub fn zeros(features: usize, hidden: usize, layers: usize) -> Self {
        Self {
            gcn: (0..layers)
                .map(|l| Matrix::zeros(if l == 0 { features } else { hidden }, hidden))
                .collect(),
            w_diff: Matrix::zeros(hidden, hidden),
            w_prod: Matrix::zeros(hidden, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, 1),
            b2: Matrix::zeros(1, 1),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut n: Vec<String> = (0..self.gcn.len()).map(|i| format!("enc.gcn.{i}")).collect();
        n.extend(["enc.w_diff", "enc.w_prod", "enc.b1", "enc.w2", "enc.b2"].map(String::from));
        n
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v: Vec<&Matrix> = self.gcn.iter().collect();
        v.extend([&self.w_diff, &self.w_prod, &self.b1, &self.w2, &self.b2]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = self.gcn.iter_mut().collect();
        v.extend([
            &mut self.w_diff,
            &mut self.w_prod,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]);
        v
    }

    /// Rebuilds from tensors in [`EncoderParams::tensors`] order.
    pub fn from_tensors(mut t: Vec<Matrix>) -> Result<Self> {
        if t.len() < 6 {
            return Err(Error::Checkpoint(format!("encoder needs >= 6 tensors, got {}", t.len())));
        }
        let tail = t.split_off(t.len() - 5);
        let [w_diff, w_prod, b1, w2, b2]: [Matrix; 5] = tail.try_into().expect("five tensors");
        Ok(Self {
            gcn: t,
            w_diff,
            w_prod,
            b1,
            w2,
            b2,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.gcn[0].rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_diff.rows()
    }

    pub fn register(&self, tape: &mut Tape) -> EncoderVars {
        EncoderVars {
            gcn: self.gcn.iter().map(|w| tape.leaf(w.clone())).collect(),
            w_diff: tape.leaf(self.w_diff.clone()),
            w_prod: tape.leaf(self.w_prod.clone()),
            b1: tape.leaf(self.b1.clone()),
            w2: tape.leaf(self.w2.clone()),
            b2: tape.leaf(self.b2.clone()),
        }
    }
}

/// `floor(q|E|/100)` distinct edges drawn from `prior`.
pub fn structural_edges(g: &Graph, prior: &[f64], q: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(Error::InvalidArgument(format!("q = {q} must be in (0, 100]")));
    }
    let k = budget(q, g.num_edges());
    if k == 0 {
        return Err(Error::InvalidArgument(format!(
            "q = {q} keeps no edges of {}",
            g.num_edges()
        )));
    }
    let mut e = sample_multinomial_k(prior, k, rng)?;
    e.sort_unstable();
    Ok(e)
}

/// One normalized propagation step followed by `W`, ordered so the
/// aggregation runs on the narrower side.
pub(crate) fn gcn_layer(
    tape: &mut Tape,
    h: Var,
    w_mat: Var,
    edge_w: Var,
    edges: &Arc<Vec<(usize, usize)>>,
) -> Result<Var> {
    let (din, dout) = tape.value(w_mat).shape();
    if din <= dout {
        let a = tape.aggregate(h, edge_w, edges.clone())?;
        tape.matmul(a, w_mat)
    } else {
        let z = tape.matmul(h, w_mat)?;
        tape.aggregate(z, edge_w, edges.clone())
    }
}

/// Node embeddings from the encoder GCN over unit-weight `edges`.
pub fn encode(tape: &mut Tape, vars: &EncoderVars, x: Var, edges: Arc<Vec<(usize, usize)>>) -> Result<Var> {
    let ones = tape.leaf(Matrix::filled(edges.len(), 1, 1.0));
    let mut h = x;
    for &w in &vars.gcn {
        let z = gcn_layer(tape, h, w, ones, &edges)?;
        h = tape.relu(z);
    }
    Ok(h)
}

/// Scores (`|E| x 1`, in `(0,1)`) for the edges `(us[i], vs[i])`.
pub fn score(tape: &mut Tape, vars: &EncoderVars, h: Var, us: Arc<Vec<usize>>, vs: Arc<Vec<usize>>) -> Result<Var> {
    let hd = tape.matmul(h, vars.w_diff)?;
    let du = tape.gather_rows(hd, us.clone())?;
    let dv = tape.gather_rows(hd, vs.clone())?;
    let diff = tape.sub(du, dv)?;
    let hu = tape.gather_rows(h, us)?;
    let hv = tape.gather_rows(h, vs)?;
    let prod = tape.mul(hu, hv)?;
    let pw = tape.matmul(prod, vars.w_prod)?;
    let z = tape.add(diff, pw)?;
    let z = tape.add_row(z, vars.b1)?;
    let z = tape.relu(z);
    let o = tape.matmul(z, vars.w2)?;
    let o = tape.add_row(o, vars.b2)?;
    Ok(tape.sigmoid(o))
}

pub(crate) fn endpoints(g: &Graph, ids: &[usize]) -> (Arc<Vec<usize>>, Arc<Vec<usize>>) {
    let us = ids.iter().map(|&e| g.edges()[e].0).collect();
    let vs = ids.iter().map(|&e| g.edges()[e].1).collect();
    (Arc::new(us), Arc::new(vs))
}

pub(crate) fn pairs(g: &Graph, ids: &[usize]) -> Arc<Vec<(usize, usize)>> {
    Arc::new(ids.iter().map(|&e| g.edges()[e]).collect())
}

/// Node embeddings without recording gradients.
pub fn encode_structural_embedding(params: &EncoderParams, g: &Graph, sp_edges: &[usize]) -> Result<Matrix> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let x = tape.leaf(g.features().clone());
    let h = encode(&mut tape, &vars, x, pairs(g, sp_edges))?;
    Ok(tape.value(h).clone())
}

/// Scores of all canonical edges of `g` given embeddings `h`.
pub fn score_edges(params: &EncoderParams, h: &Matrix, g: &Graph) -> Result<Vec<f64>> {
    if h.rows() != g.num_nodes() {
        return Err(Error::Shape {
            op: "score_edges",
            lhs: h.shape(),
            rhs: (g.num_nodes(), params.hidden()),
        });
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let hv = tape.leaf(h.clone());
    let all: Vec<usize> = (0..g.num_edges()).collect();
    let (us, vs) = endpoints(g, &all);
    let s = score(&mut tape, &vars, hv, us, vs)?;
    Ok(tape.value(s).as_slice().to_vec())
}

/// Scores turned into a sampling distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeDistribution {
    pub raw_scores: Vec<f64>,
    pub probs: Vec<f64>,
    pub mode: SamplingMode,
    pub temperature: f64,
}

/// `Sum`: `w / sum w`. `SoftmaxTemp`: `softmax(w / T)`. `GumbelTopk`: the
/// base probabilities `w / sum w`; the temperature and noise enter when
/// sampling.
pub fn normalize(raw_scores: &[f64], mode: SamplingMode, t: f64) -> Result<EdgeDistribution> {
    if raw_scores.is_empty() {
        return Err(Error::EmptyEdgeSet);
    }
    let probs = match mode {
        SamplingMode::Sum | SamplingMode::GumbelTopk => {
            let s: f64 = raw_scores.iter().sum();
            if !(s > 0.0) {
                return Err(Error::InvalidArgument("scores sum to zero".into()));
            }
            raw_scores.iter().map(|w| w / s).collect()
        }
        SamplingMode::SoftmaxTemp => {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument(format!("temperature {t} must be positive")));
            }
            let mut p: Vec<f64> = raw_scores.iter().map(|w| w / t).collect();
            crate::tensor::softmax_in_place(&mut p);
            p
        }
    };
    Ok(EdgeDistribution {
        raw_scores: raw_scores.to_vec(),
        probs,
        mode,
        temperature: t,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t0: f64,
    pub t_min: f64,
    pub max_epochs: usize,
}

impl AnnealSchedule {
    pub fn new(t0: f64, t_min: f64, max_epochs: usize) -> Result<Self> {
        if !(t_min > 0.0 && t0 >= t_min) {
            return Err(Error::InvalidArgument(format!("need t0 >= t_min > 0 ({t0}, {t_min})")));
        }
        Ok(Self { t0, t_min, max_epochs })
    }

    pub fn rate(&self) -> f64 {
        (self.t0 - self.t_min) / self.max_epochs.max(1) as f64
    }
}

/// `max(T_min, T0 - epoch * (T0 - T_min) / max_epochs)`
pub fn anneal_temperature(s: &AnnealSchedule, epoch: usize) -> f64 {
    (s.t0 - epoch as f64 * s.rate()).max(s.t_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, Split};
    use crate::rng::rng_from_seed;
    use crate::tensor::sigmoid;

    fn five_edge_graph() -> Graph {
        let x = Matrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64 * 0.61).sin());
        Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)], x, vec![0, 1, 0, 1, 0], vec![Split::Train; 5], None)
            .unwrap()
    }

    #[test]
    fn zero_params_give_half_and_zero_embedding() {
        let g = five_edge_graph();
        let p = EncoderParams::zeros(3, 4, 2);
        let h = encode_structural_embedding(&p, &g, &[0, 2, 4]).unwrap();
        assert!(h.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(score_edges(&p, &h, &g).unwrap(), vec![0.5; 5]);
    }

    #[test]
    fn scores_match_straight_line_formula() {
        let g = five_edge_graph();
        let p = EncoderParams::new(3, 4, 2, &mut rng_from_seed(3));
        let mut p = p;
        p.b1 = Matrix::from_fn(1, 4, |_, j| 0.1 * j as f64 - 0.15);
        p.b2 = Matrix::scalar(0.05);
        let h = Matrix::from_fn(5, 4, |i, j| ((i + 7 * j) as f64 * 0.37).cos());
        let got = score_edges(&p, &h, &g).unwrap();
        for (e, &(u, v)) in g.edges().iter().enumerate() {
            let mut x = [0.0; 8];
            for j in 0..4 {
                x[j] = h.get(u, j) - h.get(v, j);
                x[4 + j] = h.get(u, j) * h.get(v, j);
            }
            let mut o = p.b2.get(0, 0);
            for c in 0..4 {
                let mut z = p.b1.get(0, c);
                for j in 0..4 {
                    z += x[j] * p.w_diff.get(j, c) + x[4 + j] * p.w_prod.get(j, c);
                }
                o += z.max(0.0) * p.w2.get(c, 0);
            }
            assert!((got[e] - sigmoid(o)).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_difference_half_vanishes() {
        let g = five_edge_graph();
        let mut p = EncoderParams::new(3, 2, 1, &mut rng_from_seed(1));
        p.w_prod = Matrix::zeros(2, 2);
        let h = Matrix::filled(5, 2, 0.7);
        for s in score_edges(&p, &h, &g).unwrap() {
            assert_eq!(s, sigmoid(p.b2.get(0, 0)));
        }
    }

    #[test]
    fn normalization_examples() {
        let d = normalize(&[0.2, 0.8], SamplingMode::Sum, 1.0).unwrap();
        assert!((d.probs[0] - 0.2).abs() < 1e-15 && (d.probs[1] - 0.8).abs() < 1e-15);
        let d = normalize(&[0.0, 1.0], SamplingMode::SoftmaxTemp, 1.0).unwrap();
        assert!((d.probs[0] - 0.26894).abs() < 1e-5);
        for mode in [SamplingMode::Sum, SamplingMode::SoftmaxTemp, SamplingMode::GumbelTopk] {
            let d = normalize(&[0.4; 4], mode, 0.3).unwrap();
            assert!(d.probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
        }
        assert!(normalize(&[0.0, 0.0], SamplingMode::Sum, 1.0).is_err());
    }

    #[test]
    fn temperature_limits() {
        let w = [0.1, 0.9, 0.5, 0.3];
        let hot = normalize(&w, SamplingMode::SoftmaxTemp, 1e6).unwrap();
        assert!(hot.probs.iter().all(|p| (p - 0.25).abs() < 1e-6));
        let cold = normalize(&w, SamplingMode::SoftmaxTemp, 1e-3).unwrap();
        assert!(cold.probs[1] > 1.0 - 1e-12);
    }

    #[test]
    fn annealing() {
        let s = AnnealSchedule::new(1.0, 0.1, 500).unwrap();
        assert_eq!(anneal_temperature(&s, 0), 1.0);
        assert!((anneal_temperature(&s, 250) - 0.55).abs() < 1e-12);
        assert_eq!(anneal_temperature(&s, 500), 0.1);
        assert_eq!(anneal_temperature(&s, 900), 0.1);
    }

    #[test]
    fn structural_budget() {
        let g = five_edge_graph();
        let prior = vec![0.2; 5];
        let mut rng = rng_from_seed(0);
        assert_eq!(structural_edges(&g, &prior, 100.0, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(structural_edges(&g, &prior, 40.0, &mut rng).unwrap().len(), 2);
        assert!(structural_edges(&g, &prior, 10.0, &mut rng).is_err());
    }
}
