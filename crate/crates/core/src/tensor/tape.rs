//! Reverse-mode gradient tape over [`Matrix`] values.
//!
//! Each op appends a node holding its forward value; [`Tape::backward`]
//! walks the arena in reverse. The op set is closed: it covers the edge
//! scorer, the weighted GCN and the three losses, nothing more.
//!
//! `aggregate` is the fused GCN propagation with learnable edge weights
//! `w` over an undirected edge list:
//!
//! ```text
//! deg_i = 1 + sum_{e ∋ i} w_e        s_i = deg_i^{-1/2}
//! out_i = s_i² h_i + sum_{e=(i,j)} w_e s_i s_j h_j
//! ```

use std::sync::Arc;

use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a tape slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const CLAMP: f64 = 1e-12;
const COS_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    RowSoftmax(Var),
    Transpose(Var),
    Abs(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Arc<Vec<usize>>),
    Mask(Var, Arc<Vec<f64>>),
    Aggregate {
        h: Var,
        w: Var,
        edges: Arc<Vec<(usize, usize)>>,
        s: Vec<f64>,
    },
    RowCosine(Var, Var),
    Mean(Var),
    Sum(Var),
    CrossEntropy {
        p: Var,
        targets: Arc<Vec<(usize, usize)>>,
    },
    Bce {
        w: Var,
        targets: Arc<Vec<f64>>,
        one_sided: bool,
        mean: bool,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for slots the loss does not reach.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `like`'s shape if unreachable.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node; outstanding `Var`s become detached.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Adds a `1 x d` row vector to every row of an `n x d` matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(shape_err("add_row", x, b));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, bb) in out.row_mut(i).iter_mut().zip(b.as_slice()) {
                *o += bb;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).relu();
        self.push(v, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).sigmoid();
        self.push(v, Op::Sigmoid(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let v = self.value(a).row_softmax();
        self.push(v, Op::RowSoftmax(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(shape_err("concat_cols", x, y));
        }
        let cols = x.cols() + y.cols();
        let mut data = Vec::with_capacity(x.rows() * cols);
        for i in 0..x.rows() {
            data.extend_from_slice(x.row(i));
            data.extend_from_slice(y.row(i));
        }
        let v = Matrix::from_vec(x.rows(), cols, data)?;
        Ok(self.push(v, Op::ConcatCols(a, b)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::InvalidArgument(format!(
                "gather_rows: index {bad} out of range for {} rows",
                x.rows()
            )));
        }
        let v = x.gather_rows(&idx);
        Ok(self.push(v, Op::GatherRows(a, idx)))
    }

    /// Elementwise product with a constant mask (inverted dropout).
    pub fn mask(&mut self, a: Var, mask: Arc<Vec<f64>>) -> Result<Var> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(Error::InvalidArgument(format!(
                "mask has {} entries for a {:?} matrix",
                mask.len(),
                x.shape()
            )));
        }
        let data = x.as_slice().iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
        let v = Matrix::from_vec(x.rows(), x.cols(), data)?;
        Ok(self.push(v, Op::Mask(a, mask)))
    }

    /// Symmetric-normalized propagation with unit self-loops and edge
    /// weights `w` (`k x 1`, one per entry of `edges`).
    pub fn aggregate(&mut self, h: Var, w: Var, edges: Arc<Vec<(usize, usize)>>) -> Result<Var> {
        let (x, wv) = (self.value(h), self.value(w));
        if wv.cols() != 1 || wv.rows() != edges.len() {
            return Err(Error::InvalidArgument(format!(
                "aggregate: {} edges but weights are {:?}",
                edges.len(),
                wv.shape()
            )));
        }
        let n = x.rows();
        let mut deg = vec![1.0; n];
        for (e, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "aggregate: edge ({u},{v}) out of range for {n} nodes"
                )));
            }
            let we = wv.as_slice()[e];
            deg[u] += we;
            deg[v] += we;
        }
        if let Some(i) = deg.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "aggregate: non-positive degree at node {i}"
            )));
        }
        let s: Vec<f64> = deg.iter().map(|d| d.sqrt().recip()).collect();
        let out = propagate(x, wv.as_slice(), &edges, &s);
        Ok(self.push(out, Op::Aggregate { h, w, edges, s }))
    }

    /// Cosine similarity of matching rows, `n x 1`; 0 where a norm is tiny.
    pub fn row_cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("row_cosine", x, y));
        }
        let v = (0..x.rows())
            .map(|i| cosine(x.row(i), y.row(i)).0)
            .collect();
        Ok(self.push(Matrix::column(v), Op::RowCosine(a, b)))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = if x.is_empty() { 0.0 } else { x.sum() / x.len() as f64 };
        self.push(Matrix::scalar(m), Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    /// Mean of `-ln max(p[r, c], 1e-12)` over `(row, class)` targets.
    pub fn cross_entropy(&mut self, p: Var, targets: Arc<Vec<(usize, usize)>>) -> Result<Var> {
        if targets.is_empty() {
            return Err(Error::EmptyMask);
        }
        let x = self.value(p);
        let mut total = 0.0;
        for &(r, c) in targets.iter() {
            if r >= x.rows() || c >= x.cols() {
                return Err(Error::InvalidArgument(format!(
                    "cross_entropy: target ({r},{c}) outside {:?}",
                    x.shape()
                )));
            }
            total -= x.get(r, c).max(CLAMP).ln();
        }
        let v = total / targets.len() as f64;
        Ok(self.push(Matrix::scalar(v), Op::CrossEntropy { p, targets }))
    }

    /// Binary cross-entropy of probabilities `w` against 0/1 targets, with
    /// `w` clamped to `[1e-12, 1 - 1e-12]`. `one_sided` keeps only the
    /// positive-target term. Empty input yields 0.
    pub fn bce(&mut self, w: Var, targets: Arc<Vec<f64>>, one_sided: bool, mean: bool) -> Result<Var> {
        let x = self.value(w);
        if x.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "bce: {} targets for {} predictions",
                targets.len(),
                x.len()
            )));
        }
        let mut total = 0.0;
        for (&p, &t) in x.as_slice().iter().zip(targets.iter()) {
            let p = p.clamp(CLAMP, 1.0 - CLAMP);
            total -= t * p.ln();
            if !one_sided {
                total -= (1.0 - t) * (1.0 - p).ln();
            }
        }
        if mean && !targets.is_empty() {
            total /= targets.len() as f64;
        }
        Ok(self.push(
            Matrix::scalar(total),
            Op::Bce {
                w,
                targets,
                one_sided,
                mean,
            },
        ))
    }

    /// Gradients of the scalar `loss` with respect to every slot.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let Some(node) = self.nodes.get(loss.0) else {
            return Err(Error::Tape(format!("slot {} is not on this tape", loss.0)));
        };
        if node.value.shape() != (1, 1) {
            return Err(Error::Tape(format!(
                "loss must be scalar, got {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.backprop(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.matmul_t(val(*b))?);
                accumulate(grads, *b, val(*a).t_matmul(g)?);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.hadamard(val(*b))?);
                accumulate(grads, *b, g.hadamard(val(*a))?);
            }
            Op::AddRow(a, b) => {
                let mut gb = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (acc, x) in gb.as_mut_slice().iter_mut().zip(g.row(i)) {
                        *acc += x;
                    }
                }
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, gb);
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.scale(*s)),
            Op::Relu(a) => {
                let d = g.zip_map(val(*a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?;
                accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(out, "sigmoid", |g, y| g * y * (1.0 - y))?;
                accumulate(grads, *a, d);
            }
            Op::RowSoftmax(a) => {
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let (y, gr) = (out.row(i), g.row(i));
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (j, o) in d.row_mut(i).iter_mut().enumerate() {
                        *o = y[j] * (gr[j] - dot);
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::Abs(a) => {
                let d = g.zip_map(val(*a), "abs", |g, x| {
                    if x > 0.0 {
                        g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })?;
                accumulate(grads, *a, d);
            }
            Op::ConcatCols(a, b) => {
                let ca = val(*a).cols();
                let ga = Matrix::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                let gb = Matrix::from_fn(g.rows(), g.cols() - ca, |i, j| g.get(i, ca + j));
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::GatherRows(a, idx) => {
                let src = val(*a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for (r, &i) in idx.iter().enumerate() {
                    for (acc, x) in d.row_mut(i).iter_mut().zip(g.row(r)) {
                        *acc += x;
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::Mask(a, m) => {
                let data = g.as_slice().iter().zip(m.iter()).map(|(g, m)| g * m).collect();
                accumulate(grads, *a, Matrix::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::Aggregate { h, w, edges, s } => {
                let (hv, wv) = (val(*h), val(*w));
                accumulate(grads, *h, propagate(g, wv.as_slice(), edges, s));

                // dL/ds_i, then chain through s = deg^{-1/2} into each w_e.
                let n = hv.rows();
                let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                let mut ds: Vec<f64> = (0..n).map(|i| 2.0 * s[i] * dot(g.row(i), hv.row(i))).collect();
                let mut gw = vec![0.0; edges.len()];
                for (e, &(u, v)) in edges.iter().enumerate() {
                    let we = wv.as_slice()[e];
                    let cross = dot(g.row(u), hv.row(v));
                    let cross_t = dot(g.row(v), hv.row(u));
                    gw[e] = s[u] * s[v] * (cross + cross_t);
                    ds[u] += we * s[v] * (cross + cross_t);
                    ds[v] += we * s[u] * (cross + cross_t);
                }
                // ds/ddeg = -1/2 deg^{-3/2} = -1/2 s^3
                let ddeg: Vec<f64> = ds.iter().zip(s).map(|(d, s)| -0.5 * d * s * s * s).collect();
                for (e, &(u, v)) in edges.iter().enumerate() {
                    gw[e] += ddeg[u] + ddeg[v];
                }
                accumulate(grads, *w, Matrix::column(gw));
            }
            Op::RowCosine(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                let mut gb = Matrix::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let (xr, yr) = (x.row(i), y.row(i));
                    let (c, na, nb) = cosine(xr, yr);
                    if na < COS_EPS || nb < COS_EPS {
                        continue;
                    }
                    let gi = g.get(i, 0);
                    let inv = 1.0 / (na * nb);
                    for j in 0..x.cols() {
                        ga.row_mut(i)[j] = gi * (yr[j] * inv - c * xr[j] / (na * na));
                        gb.row_mut(i)[j] = gi * (xr[j] * inv - c * yr[j] / (nb * nb));
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Mean(a) => {
                let x = val(*a);
                let s = g.as_slice()[0] / x.len().max(1) as f64;
                accumulate(grads, *a, Matrix::filled(x.rows(), x.cols(), s));
            }
            Op::Sum(a) => {
                let x = val(*a);
                accumulate(grads, *a, Matrix::filled(x.rows(), x.cols(), g.as_slice()[0]));
            }
            Op::CrossEntropy { p, targets } => {
                let x = val(*p);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                let scale = g.as_slice()[0] / targets.len() as f64;
                for &(r, c) in targets.iter() {
                    let pv = x.get(r, c);
                    if pv > CLAMP {
                        let cur = d.get(r, c);
                        d.set(r, c, cur - scale / pv);
                    }
                }
                accumulate(grads, *p, d);
            }
            Op::Bce {
                w,
                targets,
                one_sided,
                mean,
            } => {
                let x = val(*w);
                let mut scale = g.as_slice()[0];
                if *mean && !targets.is_empty() {
                    scale /= targets.len() as f64;
                }
                let data = x
                    .as_slice()
                    .iter()
                    .zip(targets.iter())
                    .map(|(&p, &t)| {
                        if !(CLAMP..=1.0 - CLAMP).contains(&p) {
                            return 0.0;
                        }
                        let mut d = -t / p;
                        if !*one_sided {
                            d += (1.0 - t) / (1.0 - p);
                        }
                        scale * d
                    })
                    .collect();
                accumulate(grads, *w, Matrix::from_vec(x.rows(), x.cols(), data)?);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(d),
    }
}

/// `out_i = s_i² x_i + sum_{e=(i,j)} w_e s_i s_j x_j`; the operator is
/// symmetric, so the same routine serves the backward pass.
fn propagate(x: &Matrix, w: &[f64], edges: &[(usize, usize)], s: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let f = s[i] * s[i];
        for (o, v) in out.row_mut(i).iter_mut().zip(x.row(i)) {
            *o = f * v;
        }
    }
    for (e, &(u, v)) in edges.iter().enumerate() {
        let c = w[e] * s[u] * s[v];
        if c == 0.0 {
            continue;
        }
        for j in 0..x.cols() {
            let (xu, xv) = (x.get(u, j), x.get(v, j));
            out.row_mut(u)[j] += c * xv;
            out.row_mut(v)[j] += c * xu;
        }
    }
    out
}

/// (cosine, |a|, |b|)
fn cosine(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na < COS_EPS || nb < COS_EPS {
        return (0.0, na, nb);
    }
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (d / (na * nb), na, nb)
}
