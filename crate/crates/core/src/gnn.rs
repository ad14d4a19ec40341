//! Edge-weighted GCN on a sampled subgraph.
//!
//! `Â = D^{-1/2} (A_w + I) D^{-1/2}` where `A_w` holds the sampled edge
//! weights (symmetrized) and `D` its row sums including the unit
//! self-loops. Hidden layers are `ReLU(Â H W)`, the last layer is a row
//! softmax. Dropout, when training, follows each hidden layer; the
//! reported hidden embedding is the first layer's activation before it.

use std::sync::Arc;

use rand::Rng as _;

use crate::encoder::gcn_layer;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Matrix, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams {
    pub weights: Vec<Matrix>,
    pub biases: Option<Vec<Matrix>>,
}

#[derive(Clone, Debug)]
pub struct GnnVars {
    pub weights: Vec<Var>,
    pub biases: Option<Vec<Var>>,
}

impl GnnVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = self.weights.clone();
        if let Some(b) = &self.biases {
            v.extend(b.iter().copied());
        }
        v
    }
}

fn layer_dims(features: usize, hidden: usize, classes: usize, layers: usize) -> Vec<(usize, usize)> {
    (0..layers)
        .map(|l| {
            let din = if l == 0 { features } else { hidden };
            let dout = if l + 1 == layers { classes } else { hidden };
            (din, dout)
        })
        .collect()
}

impl GnnParams {
    pub fn new(features: usize, hidden: usize, classes: usize, layers: usize, bias: bool, rng: &mut Rng) -> Self {
        let dims = layer_dims(features, hidden, classes, layers);
        Self {
            weights: dims.iter().map(|&(i, o)| Matrix::glorot(i, o, i, o, rng)).collect(),
            biases: bias.then(|| dims.iter().map(|&(_, o)| Matrix::zeros(1, o)).collect()),
        }
    }

    pub fn zeros(features: usize, hidden: usize, classes: usize, layers: usize, bias: bool) -> Self {
        let dims = layer_dims(features, hidden, classes, layers);
        Self {
            weights: dims.iter().map(|&(i, o)| Matrix::zeros(i, o)).collect(),
            biases: bias.then(|| dims.iter().map(|&(_, o)| Matrix::zeros(1, o)).collect()),
        }
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn classes(&self) -> usize {
        self.weights.last().map_or(0, Matrix::cols)
    }

    pub fn names(&self) -> Vec<String> {
        let mut n: Vec<String> = (0..self.weights.len()).map(|i| format!("gnn.w.{i}")).collect();
        if let Some(b) = &self.biases {
            n.extend((0..b.len()).map(|i| format!("gnn.b.{i}")));
        }
        n
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v: Vec<&Matrix> = self.weights.iter().collect();
        if let Some(b) = &self.biases {
            v.extend(b.iter());
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = self.weights.iter_mut().collect();
        if let Some(b) = &mut self.biases {
            v.extend(b.iter_mut());
        }
        v
    }

    pub fn register(&self, tape: &mut Tape) -> GnnVars {
        GnnVars {
            weights: self.weights.iter().map(|w| tape.leaf(w.clone())).collect(),
            biases: self
                .biases
                .as_ref()
                .map(|b| b.iter().map(|m| tape.leaf(m.clone())).collect()),
        }
    }
}

/// Tape outputs of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct GnnForward {
    pub probs: Var,
    pub hidden: Var,
}

/// Records a forward pass. `edge_w` is `k x 1`, aligned with `edges`.
/// `dropout = Some((rate, rng))` enables training-mode dropout.
pub fn forward(
    tape: &mut Tape,
    vars: &GnnVars,
    x: Var,
    edge_w: Var,
    edges: Arc<Vec<(usize, usize)>>,
    dropout: Option<(f64, &mut Rng)>,
) -> Result<GnnForward> {
    let n_layers = vars.weights.len();
    if n_layers == 0 {
        return Err(Error::InvalidArgument("GCN needs at least one layer".into()));
    }
    let mut dropout = dropout;
    let mut h = x;
    let mut hidden = None;
    for (l, &w) in vars.weights.iter().enumerate() {
        let mut z = gcn_layer(tape, h, w, edge_w, &edges)?;
        if let Some(b) = &vars.biases {
            z = tape.add_row(z, b[l])?;
        }
        if l + 1 == n_layers {
            if hidden.is_none() {
                hidden = Some(z);
            }
            let p = tape.row_softmax(z);
            return Ok(GnnForward {
                probs: p,
                hidden: hidden.expect("set above"),
            });
        }
        h = tape.relu(z);
        if hidden.is_none() {
            hidden = Some(h);
        }
        if let Some((rate, rng)) = dropout.as_mut() {
            if *rate > 0.0 {
                let keep = 1.0 - *rate;
                let m: Vec<f64> = (0..tape.value(h).len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                h = tape.mask(h, Arc::new(m))?;
            }
        }
    }
    unreachable!("loop returns at the last layer")
}

/// Class probabilities and first-layer embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnOutput {
    pub probs: Matrix,
    pub hidden: Matrix,
}

/// Forward pass without gradients.
pub fn gcn_forward(
    params: &GnnParams,
    x: &Matrix,
    edges: &[(usize, usize)],
    weights: &[f64],
    dropout: Option<(f64, &mut Rng)>,
) -> Result<GnnOutput> {
    if edges.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} edges but {} weights",
            edges.len(),
            weights.len()
        )));
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let xv = tape.leaf(x.clone());
    let wv = tape.leaf(Matrix::column(weights.to_vec()));
    let out = forward(&mut tape, &vars, xv, wv, Arc::new(edges.to_vec()), dropout)?;
    Ok(GnnOutput {
        probs: tape.value(out.probs).clone(),
        hidden: tape.value(out.hidden).clone(),
    })
}

/// Row argmax, ties to the lowest class.
pub fn predict_labels(probs: &Matrix) -> Vec<usize> {
    probs.argmax_rows()
}
