//! Training loops, ensemble inference and early stopping.
//!
//! Each epoch visits the parts in id order. For the learned method a part
//! step is: draw structural edges from the prior, embed and score every
//! edge, normalize at the current temperature, mix in the prior, draw `k`
//! edges, run the GCN on them with the drawn scores as weights, and take
//! one Adam step on the combined loss. Fixed methods draw from their
//! distribution with unit weights and train on cross-entropy alone.
//!
//! After the parts, one evaluation subgraph per part is drawn from the
//! unaugmented distribution and the updated GCN is scored on every split.
//! The checkpoint with the best validation micro-F1 (ties go to the later
//! epoch) is what training returns.
//!
//! Every random draw uses a stream keyed by (purpose, epoch, part), so a
//! run resumed from a checkpoint replays the uninterrupted run exactly.

mod checkpoint;
mod metrics;

use std::sync::Arc;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use metrics::{detect_convergence, read_metrics_csv, write_metrics_csv, EpochMetrics};

use crate::baselines::{fixed_distribution, macro_f1, micro_f1};
use crate::config::{Method, RunConfig, SamplingMode};
use crate::encoder::{
    encode, encode_structural_embedding, normalize, pairs, score, score_edges, AnnealSchedule,
    EncoderParams,
};
use crate::error::{Error, Result};
use crate::gnn::{forward, gcn_forward, predict_labels, GnnParams};
use crate::graph::{Graph, Split};
use crate::loss::{assortativity_var, consistency_var, cross_entropy_var, total_var, LossBreakdown, LossWeights};
use crate::prior::{compute_prior, partition_graph, restrict, PartView};
use crate::rng::{rng_for, stream, Rng};
use crate::sampler::{augment_with_prior, sample_gumbel_topk, sample_multinomial_k, SparseSubgraph};
use crate::tensor::{Adam, AdamConfig, Gradients, Matrix, Tape, Var};

/// Everything needed to continue or reuse a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub method: Method,
    pub encoder: EncoderParams,
    pub gnn: GnnParams,
    pub enc_adam: Adam,
    pub gnn_adam: Adam,
    pub best_encoder: EncoderParams,
    pub best_gnn: GnnParams,
    /// Temperature of the best validation epoch.
    pub best_t: f64,
    pub best_val_f1: f64,
    pub best_epoch: usize,
    /// Epochs completed.
    pub epoch: usize,
    /// Epochs since the validation F1 last strictly improved.
    pub stale_epochs: usize,
    /// Up to the last five epoch losses.
    pub loss_tail: Vec<f64>,
    /// Epoch count at which the convergence rule first held.
    pub converged_at: Option<usize>,
    pub num_nodes: usize,
    pub num_edges: usize,
}

impl ModelState {
    /// Fresh parameters from the run seed.
    pub fn init(g: &Graph, cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_for(cfg.seed, &[stream::INIT]);
        let encoder = EncoderParams::new(g.feature_dim(), cfg.hidden, cfg.encoder_layers, &mut rng);
        let gnn = GnnParams::new(g.feature_dim(), cfg.hidden, g.num_classes(), cfg.layers, cfg.gnn_bias, &mut rng);
        let adam = AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        };
        Ok(Self {
            method: cfg.method,
            enc_adam: Adam::new(adam, &encoder.tensors()),
            gnn_adam: Adam::new(adam, &gnn.tensors()),
            best_encoder: encoder.clone(),
            best_gnn: gnn.clone(),
            encoder,
            gnn,
            best_t: cfg.t0,
            best_val_f1: 0.0,
            best_epoch: 0,
            epoch: 0,
            stale_epochs: 0,
            loss_tail: Vec::new(),
            converged_at: None,
            num_nodes: g.num_nodes(),
            num_edges: g.num_edges(),
        })
    }

    /// Checks that the state was built for `g`.
    pub fn check_graph(&self, g: &Graph) -> Result<()> {
        if self.num_nodes != g.num_nodes() || self.num_edges != g.num_edges() {
            return Err(Error::Checkpoint(format!(
                "checkpoint is for {} nodes / {} edges, graph has {} / {}",
                self.num_nodes,
                self.num_edges,
                g.num_nodes(),
                g.num_edges()
            )));
        }
        if self.gnn.input_dim() != g.feature_dim() || self.encoder.input_dim() != g.feature_dim() {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} features, graph has {}",
                self.gnn.input_dim(),
                g.feature_dim()
            )));
        }
        if self.gnn.classes() != g.num_classes() {
            return Err(Error::Checkpoint(format!(
                "checkpoint predicts {} classes, graph has {}",
                self.gnn.classes(),
                g.num_classes()
            )));
        }
        Ok(())
    }
}

/// Result of a full training run.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub state: ModelState,
    pub metrics: Vec<EpochMetrics>,
    /// First epoch count at which the convergence rule held, else the
    /// number of epochs run.
    pub epochs_to_converge: usize,
}

/// A part prepared for training.
struct PartCtx {
    view: PartView,
    prior: Vec<f64>,
    fixed: Option<Vec<f64>>,
    /// Owned training nodes (local ids): the cross-entropy targets.
    ce_nodes: Vec<usize>,
    /// Local nodes in the training split, halo included.
    train_mask: Vec<bool>,
    edges: Arc<Vec<(usize, usize)>>,
    us: Arc<Vec<usize>>,
    vs: Arc<Vec<usize>>,
    /// Edges drawn per step.
    k: usize,
}

fn build_parts(g: &Graph, cfg: &RunConfig) -> Result<Vec<PartCtx>> {
    if g.num_edges() == 0 {
        return Err(Error::EmptyEdgeSet);
    }
    let prior = compute_prior(g)?;
    let fixed = match cfg.method {
        Method::Learned | Method::FullGraph => None,
        m => Some(fixed_distribution(g, m, cfg.er_cap)?),
    };
    let views = if g.num_edges() <= cfg.edge_cap {
        vec![PartView::whole(g)]
    } else {
        PartView::all(g, &partition_graph(g, cfg.edge_cap, cfg.seed)?)?
    };
    views
        .into_iter()
        .map(|view| {
            let lg = &view.graph;
            let m = lg.num_edges();
            let (prior, fixed) = if m == 0 {
                (Vec::new(), None)
            } else {
                (
                    restrict(&prior, &view.global_edges)?,
                    fixed.as_ref().map(|f| restrict(f, &view.global_edges)).transpose()?,
                )
            };
            let train_mask = lg.mask(Split::Train);
            let ce_nodes = (0..lg.num_nodes()).filter(|&i| train_mask[i] && view.owned[i]).collect();
            let edges = Arc::new(lg.edges().to_vec());
            let us = Arc::new(edges.iter().map(|e| e.0).collect());
            let vs = Arc::new(edges.iter().map(|e| e.1).collect());
            let k = if cfg.method == Method::FullGraph {
                m
            } else {
                cfg.budget(m).clamp(1.min(m), m)
            };
            Ok(PartCtx {
                prior,
                fixed,
                ce_nodes,
                train_mask,
                edges,
                us,
                vs,
                k,
                view,
            })
        })
        .collect()
}

/// Which distribution a part's evaluation subgraph comes from.
enum EvalSource {
    Learned { probs: Vec<f64>, raw: Vec<f64> },
    Fixed,
}

struct PartStep {
    loss: LossBreakdown,
    encoder_updated: bool,
    eval: EvalSource,
}

/// `k` edges from a learned distribution, the way the sampling mode says.
fn draw(mode: SamplingMode, p: &[f64], k: usize, t: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    match mode {
        SamplingMode::GumbelTopk => sample_gumbel_topk(p, k, t, true, rng),
        _ => sample_multinomial_k(p, k, rng),
    }
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFiniteGradient(name) => Error::Diverged {
            epoch,
            detail: format!("gradient of {name} is not finite"),
        },
        other => other,
    }
}

fn adam_step(
    adam: &mut Adam,
    names: Vec<String>,
    mut params: Vec<&mut Matrix>,
    vars: &[Var],
    grads: &Gradients,
    epoch: usize,
) -> Result<()> {
    let gs: Vec<Matrix> = vars
        .iter()
        .zip(&params)
        .map(|(&v, p)| grads.get_or_zeros(v, p))
        .collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let gs: Vec<&Matrix> = gs.iter().collect();
    adam.step(&names, &mut params, &gs).map_err(diverged(epoch))
}

fn update_gnn(state: &mut ModelState, vars: &[Var], grads: &Gradients, epoch: usize) -> Result<()> {
    let names = state.gnn.names();
    adam_step(&mut state.gnn_adam, names, state.gnn.tensors_mut(), vars, grads, epoch)
}

fn update_encoder(state: &mut ModelState, vars: &[Var], grads: &Gradients, epoch: usize) -> Result<()> {
    let names = state.encoder.names();
    adam_step(&mut state.enc_adam, names, state.encoder.tensors_mut(), vars, grads, epoch)
}

fn check_loss(loss: &LossBreakdown, epoch: usize) -> Result<()> {
    if loss.total.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            epoch,
            detail: format!(
                "loss is {} (ce {}, assor {}, cons {})",
                loss.total, loss.ce, loss.assor, loss.cons
            ),
        })
    }
}

/// Micro-F1 of an eval-mode forward on `nodes`; 0 when `nodes` is empty.
fn subgraph_train_f1(gnn: &GnnParams, g: &Graph, edges: &[(usize, usize)], w: &[f64], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Ok(0.0);
    }
    let out = gcn_forward(gnn, g.features(), edges, w, None)?;
    let pred = predict_labels(&out.probs);
    let hits = nodes.iter().filter(|&&i| pred[i] == g.labels()[i]).count();
    Ok(hits as f64 / nodes.len() as f64)
}

fn learned_step(cfg: &RunConfig, part: &PartCtx, state: &mut ModelState, epoch: usize, pi: usize, t: f64) -> Result<PartStep> {
    let g = &part.view.graph;
    let (e, p) = (epoch as u64, pi as u64);
    let weights = LossWeights {
        alpha1: cfg.alpha1,
        alpha2: cfg.alpha2,
        alpha3: cfg.alpha3,
    };

    let mut sp = sample_multinomial_k(&part.prior, part.k, &mut rng_for(cfg.seed, &[stream::STRUCTURAL, e, p]))?;
    sp.sort_unstable();

    let mut tape = Tape::new();
    let ev = state.encoder.register(&mut tape);
    let gv = state.gnn.register(&mut tape);
    let x = tape.leaf(g.features().clone());
    let h = encode(&mut tape, &ev, x, pairs(g, &sp))?;
    let s = score(&mut tape, &ev, h, part.us.clone(), part.vs.clone())?;
    let raw = tape.value(s).as_slice().to_vec();
    let dist = normalize(&raw, cfg.sampling, t)?;
    let augmented = augment_with_prior(&dist.probs, &part.prior, cfg.lambda)?;
    let idx = draw(
        cfg.sampling,
        &augmented,
        part.k,
        t,
        &mut rng_for(cfg.seed, &[stream::SAMPLE, e, p]),
    )?;

    let w = tape.gather_rows(s, Arc::new(idx.clone()))?;
    let sampled = pairs(g, &idx);
    let mut drop_rng = rng_for(cfg.seed, &[stream::DROPOUT, e, p]);
    let out = forward(&mut tape, &gv, x, w, sampled.clone(), Some((cfg.dropout, &mut drop_rng)))?;
    let ce = if part.ce_nodes.is_empty() {
        tape.leaf(Matrix::scalar(0.0))
    } else {
        cross_entropy_var(&mut tape, out.probs, g.labels(), &part.ce_nodes)?
    };
    let assor = assortativity_var(
        &mut tape,
        s,
        &part.edges,
        g.labels(),
        &part.train_mask,
        cfg.assor_one_sided,
        cfg.sum_reduction,
    )?;
    let cons = consistency_var(&mut tape, w, out.hidden, &sampled, cfg.sum_reduction)?;
    let (total, loss) = total_var(&mut tape, ce, assor, cons, &weights)?;
    check_loss(&loss, epoch)?;

    let full = if cfg.conditional_updates {
        let w_vals: Vec<f64> = idx.iter().map(|&i| raw[i]).collect();
        let learned = subgraph_train_f1(&state.gnn, g, &sampled, &w_vals, &part.ce_nodes)?;
        let base = sample_multinomial_k(&part.prior, part.k, &mut rng_for(cfg.seed, &[stream::BASELINE, e, p]))?;
        let baseline = subgraph_train_f1(&state.gnn, g, &pairs(g, &base), &vec![1.0; base.len()], &part.ce_nodes)?;
        learned >= baseline
    } else {
        true
    };

    let grads = tape.backward(if full { total } else { ce })?;
    if full {
        update_encoder(state, &ev.all(), &grads, epoch)?;
    }
    update_gnn(state, &gv.all(), &grads, epoch)?;
    Ok(PartStep {
        loss,
        encoder_updated: full,
        eval: EvalSource::Learned { probs: dist.probs, raw },
    })
}

/// Cross-entropy step on a fixed-distribution (or full) edge set with unit
/// weights. Also used for learned runs on parts without edges.
fn fixed_step(cfg: &RunConfig, part: &PartCtx, state: &mut ModelState, epoch: usize, pi: usize) -> Result<PartStep> {
    let g = &part.view.graph;
    let (e, p) = (epoch as u64, pi as u64);
    let idx = fixed_edges(part, &mut rng_for(cfg.seed, &[stream::SAMPLE, e, p]))?;
    let mut tape = Tape::new();
    let gv = state.gnn.register(&mut tape);
    let x = tape.leaf(g.features().clone());
    let w = tape.leaf(Matrix::filled(idx.len(), 1, 1.0));
    let mut drop_rng = rng_for(cfg.seed, &[stream::DROPOUT, e, p]);
    let out = forward(&mut tape, &gv, x, w, pairs(g, &idx), Some((cfg.dropout, &mut drop_rng)))?;
    if part.ce_nodes.is_empty() {
        return Ok(PartStep {
            loss: LossBreakdown::default(),
            encoder_updated: false,
            eval: EvalSource::Fixed,
        });
    }
    let ce = cross_entropy_var(&mut tape, out.probs, g.labels(), &part.ce_nodes)?;
    let v = tape.value(ce).as_slice()[0];
    let loss = LossBreakdown {
        ce: v,
        assor: 0.0,
        cons: 0.0,
        total: v,
    };
    check_loss(&loss, epoch)?;
    let grads = tape.backward(ce)?;
    update_gnn(state, &gv.all(), &grads, epoch)?;
    Ok(PartStep {
        loss,
        encoder_updated: false,
        eval: EvalSource::Fixed,
    })
}

/// Edges for a non-learned step: everything for the full graph (or an
/// edgeless part), otherwise `k` draws from the fixed distribution.
fn fixed_edges(part: &PartCtx, rng: &mut Rng) -> Result<Vec<usize>> {
    match &part.fixed {
        Some(f) => sample_multinomial_k(f, part.k, rng),
        None => Ok((0..part.view.graph.num_edges()).collect()),
    }
}

/// Split-wise F1 of a prediction over the whole graph; 0 for empty splits.
fn split_scores(pred: &[usize], g: &Graph) -> Result<[f64; 6]> {
    let mut out = [0.0; 6];
    for (i, s) in [Split::Train, Split::Val, Split::Test].into_iter().enumerate() {
        let mask = g.mask(s);
        if mask.iter().any(|&m| m) {
            out[2 * i] = micro_f1(pred, g.labels(), &mask)?;
            out[2 * i + 1] = macro_f1(pred, g.labels(), &mask)?;
        }
    }
    Ok(out)
}

/// Fraction of same-label edges among global edge ids `edges`.
fn homophily_of(g: &Graph, edges: &[usize]) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    let same = edges
        .iter()
        .filter(|&&e| {
            let (u, v) = g.edges()[e];
            g.labels()[u] == g.labels()[v]
        })
        .count();
    same as f64 / edges.len() as f64
}

/// Stateful epoch-by-epoch driver.
pub struct Trainer<'a> {
    g: &'a Graph,
    cfg: RunConfig,
    parts: Vec<PartCtx>,
    schedule: AnnealSchedule,
    pub state: ModelState,
    pub metrics: Vec<EpochMetrics>,
}

impl<'a> Trainer<'a> {
    pub fn new(g: &'a Graph, cfg: &RunConfig) -> Result<Self> {
        let state = ModelState::init(g, cfg)?;
        Self::resume(g, cfg, state, Vec::new())
    }

    /// Continues from `state`; `metrics` are the rows already recorded.
    pub fn resume(g: &'a Graph, cfg: &RunConfig, state: ModelState, metrics: Vec<EpochMetrics>) -> Result<Self> {
        cfg.validate()?;
        if g.nodes_in(Split::Train).is_empty() {
            return Err(Error::EmptyMask);
        }
        state.check_graph(g)?;
        if state.method != cfg.method {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained with {}, config says {}",
                state.method.as_str(),
                cfg.method.as_str()
            )));
        }
        Ok(Self {
            g,
            parts: build_parts(g, cfg)?,
            schedule: AnnealSchedule::new(cfg.t0, cfg.t_min, cfg.max_epochs)?,
            cfg: cfg.clone(),
            state,
            metrics,
        })
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn temperature(&self) -> f64 {
        crate::encoder::anneal_temperature(&self.schedule, self.state.epoch)
    }

    /// Max epochs reached, patience exhausted, or (when asked to) converged.
    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.cfg.max_epochs
            || self.state.stale_epochs >= self.cfg.patience
            || (self.cfg.stop_on_convergence && self.state.converged_at.is_some())
    }

    /// Runs one epoch over all parts and evaluates.
    pub fn step(&mut self) -> Result<&EpochMetrics> {
        let epoch = self.state.epoch;
        let t = self.temperature();
        let mut steps = Vec::with_capacity(self.parts.len());
        for (pi, part) in self.parts.iter().enumerate() {
            let s = if self.cfg.method == Method::Learned && part.k > 0 {
                learned_step(&self.cfg, part, &mut self.state, epoch, pi, t)?
            } else {
                fixed_step(&self.cfg, part, &mut self.state, epoch, pi)?
            };
            steps.push(s);
        }

        let n = self.g.num_nodes();
        let mut probs = Matrix::zeros(n, self.g.num_classes());
        let mut used = Vec::new();
        for (pi, (part, s)) in self.parts.iter().zip(&steps).enumerate() {
            let mut rng = rng_for(self.cfg.seed, &[stream::EVAL, epoch as u64, pi as u64]);
            let (idx, w) = eval_edges(&self.cfg, part, &s.eval, t, &mut rng)?;
            let out = gcn_forward(&self.state.gnn, part.view.graph.features(), &pairs(&part.view.graph, &idx), &w, None)?;
            scatter_owned(&mut probs, &part.view, &out.probs);
            used.extend(idx.iter().map(|&e| part.view.global_edges[e]));
        }
        let pred = predict_labels(&probs);
        let f1 = split_scores(&pred, self.g)?;

        let parts = steps.len() as f64;
        let mean = |f: fn(&LossBreakdown) -> f64| steps.iter().map(|s| f(&s.loss)).sum::<f64>() / parts;
        let updated = steps.iter().filter(|s| s.encoder_updated).count();
        let row = EpochMetrics {
            epoch,
            loss_total: mean(|l| l.total),
            loss_ce: mean(|l| l.ce),
            loss_assor: mean(|l| l.assor),
            loss_cons: mean(|l| l.cons),
            train_micro_f1: f1[0],
            train_macro_f1: f1[1],
            val_micro_f1: f1[2],
            val_macro_f1: f1[3],
            test_micro_f1: f1[4],
            test_macro_f1: f1[5],
            subgraph_edge_homophily: homophily_of(self.g, &used),
            temperature: t,
            encoder_updated: updated == steps.len(),
            encoder_updated_parts: updated,
            parts: steps.len(),
        };

        let st = &mut self.state;
        if row.val_micro_f1 > st.best_val_f1 || epoch == 0 {
            st.stale_epochs = 0;
        } else {
            st.stale_epochs += 1;
        }
        if row.val_micro_f1 >= st.best_val_f1 {
            st.best_val_f1 = row.val_micro_f1;
            st.best_t = t;
            st.best_epoch = epoch;
            st.best_encoder = st.encoder.clone();
            st.best_gnn = st.gnn.clone();
        }
        st.loss_tail.push(row.loss_total);
        if st.loss_tail.len() > metrics::CONVERGENCE_WINDOW {
            st.loss_tail.remove(0);
        }
        if st.converged_at.is_none() && detect_convergence(&st.loss_tail) {
            st.converged_at = Some(epoch + 1);
        }
        st.epoch += 1;
        self.metrics.push(row);
        Ok(self.metrics.last().expect("just pushed"))
    }

    /// Steps until [`Trainer::is_done`].
    pub fn run(mut self) -> Result<TrainRun> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainRun {
        let epochs_to_converge = self.state.converged_at.unwrap_or(self.state.epoch);
        TrainRun {
            state: self.state,
            metrics: self.metrics,
            epochs_to_converge,
        }
    }
}

/// Copies the owned rows of a part's output into the global matrix.
fn scatter_owned(global: &mut Matrix, view: &PartView, local: &Matrix) {
    for (i, &u) in view.global_nodes.iter().enumerate() {
        if view.owned[i] {
            global.row_mut(u).copy_from_slice(local.row(i));
        }
    }
}

/// One subgraph from the unaugmented distribution, with its weights.
fn eval_edges(cfg: &RunConfig, part: &PartCtx, src: &EvalSource, t: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<f64>)> {
    match src {
        EvalSource::Learned { probs, raw } => {
            let idx = draw(cfg.sampling, probs, part.k, t, rng)?;
            let w = idx.iter().map(|&e| raw[e]).collect();
            Ok((idx, w))
        }
        EvalSource::Fixed => {
            let idx = fixed_edges(part, rng)?;
            let w = vec![1.0; idx.len()];
            Ok((idx, w))
        }
    }
}

/// Standard training.
pub fn train(g: &Graph, cfg: &RunConfig) -> Result<TrainRun> {
    Trainer::new(g, cfg)?.run()
}

/// Training that only updates the encoder when its subgraph does at least
/// as well on the training nodes as a prior-sampled one.
pub fn train_conditional(g: &Graph, cfg: &RunConfig) -> Result<TrainRun> {
    let cfg = RunConfig {
        conditional_updates: true,
        ..cfg.clone()
    };
    Trainer::new(g, &cfg)?.run()
}

/// Averaged class probabilities and their argmax.
#[derive(Clone, Debug)]
pub struct Inference {
    pub probs: Matrix,
    pub labels: Vec<usize>,
    /// Mean edge homophily of the drawn subgraphs.
    pub subgraph_edge_homophily: f64,
}

/// Learned distribution of every part at the best temperature, scored with
/// the best encoder.
fn best_distributions(state: &ModelState, parts: &[PartCtx], cfg: &RunConfig) -> Result<Vec<EvalSource>> {
    parts
        .iter()
        .enumerate()
        .map(|(pi, part)| {
            if state.method != Method::Learned || part.k == 0 {
                return Ok(EvalSource::Fixed);
            }
            let g = &part.view.graph;
            let mut sp = sample_multinomial_k(&part.prior, part.k, &mut rng_for(cfg.seed, &[stream::INFER, pi as u64]))?;
            sp.sort_unstable();
            let h = encode_structural_embedding(&state.best_encoder, g, &sp)?;
            let raw = score_edges(&state.best_encoder, &h, g)?;
            let dist = normalize(&raw, cfg.sampling, state.best_t)?;
            Ok(EvalSource::Learned { probs: dist.probs, raw })
        })
        .collect()
}

/// Draws `cfg.ensemble` subgraphs per part at the best temperature, runs the
/// best GCN on each without dropout and averages the probabilities.
pub fn infer_ensemble(state: &ModelState, g: &Graph, cfg: &RunConfig) -> Result<Inference> {
    if state.epoch == 0 {
        return Err(Error::InvalidArgument("model has not been trained".into()));
    }
    state.check_graph(g)?;
    let cfg = RunConfig {
        method: state.method,
        ..cfg.clone()
    };
    cfg.validate()?;
    let parts = build_parts(g, &cfg)?;
    let sources = best_distributions(state, &parts, &cfg)?;
    let r = cfg.ensemble;
    let mut probs = Matrix::zeros(g.num_nodes(), g.num_classes());
    let mut homophily = 0.0;
    for (pi, (part, src)) in parts.iter().zip(&sources).enumerate() {
        let lg = &part.view.graph;
        let mut sum = Matrix::zeros(lg.num_nodes(), g.num_classes());
        let mut edges_seen = Vec::new();
        for i in 0..r {
            let mut rng = rng_for(cfg.seed, &[stream::INFER, pi as u64, 1 + i as u64]);
            let (idx, w) = eval_edges(&cfg, part, src, state.best_t, &mut rng)?;
            let out = gcn_forward(&state.best_gnn, lg.features(), &pairs(lg, &idx), &w, None)?;
            sum = sum.add(&out.probs)?;
            edges_seen.push(idx.iter().map(|&e| part.view.global_edges[e]).collect::<Vec<_>>());
        }
        scatter_owned(&mut probs, &part.view, &sum.scale(1.0 / r as f64));
        // Weighted by edge count so parts contribute like one graph would.
        homophily += edges_seen.iter().map(|e| homophily_of(g, e) * e.len() as f64).sum::<f64>();
    }
    let total_drawn: usize = parts.iter().map(|p| p.k).sum::<usize>() * r;
    let labels = predict_labels(&probs);
    Ok(Inference {
        probs,
        labels,
        subgraph_edge_homophily: if total_drawn == 0 { 0.0 } else { homophily / total_drawn as f64 },
    })
}

/// Test metrics of a trained state via ensemble inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub train_micro_f1: f64,
    pub val_micro_f1: f64,
    pub test_micro_f1: f64,
    pub test_macro_f1: f64,
    pub subgraph_edge_homophily: f64,
}

pub fn evaluate(state: &ModelState, g: &Graph, cfg: &RunConfig) -> Result<Evaluation> {
    let inf = infer_ensemble(state, g, cfg)?;
    let f1 = split_scores(&inf.labels, g)?;
    Ok(Evaluation {
        train_micro_f1: f1[0],
        val_micro_f1: f1[2],
        test_micro_f1: f1[4],
        test_macro_f1: f1[5],
        subgraph_edge_homophily: inf.subgraph_edge_homophily,
    })
}

/// One subgraph of the whole graph with `floor(q|E|/100)` edges, drawn at
/// the best temperature. Fixed methods carry unit weights.
pub fn sample_subgraph(state: &ModelState, g: &Graph, cfg: &RunConfig, q: f64, seed: u64) -> Result<SparseSubgraph> {
    state.check_graph(g)?;
    let cfg = RunConfig {
        method: state.method,
        q,
        edge_cap: usize::MAX,
        seed,
        ..cfg.clone()
    };
    cfg.validate()?;
    let parts = build_parts(g, &cfg)?;
    let part = &parts[0];
    let src = best_distributions(state, &parts, &cfg)?.remove(0);
    let mut rng = rng_for(seed, &[stream::INFER, u64::MAX]);
    let (mut idx, w) = eval_edges(&cfg, part, &src, state.best_t, &mut rng)?;
    let mut pairs: Vec<(usize, f64)> = idx.drain(..).zip(w).collect();
    pairs.sort_by_key(|p| p.0);
    Ok(SparseSubgraph {
        edge_indices: pairs.iter().map(|p| p.0).collect(),
        edge_weights: pairs.iter().map(|p| p.1).collect(),
    })
}
