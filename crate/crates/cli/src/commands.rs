//! One function per subcommand. Each writes its files under `out_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use learnsparse::baselines::{macro_f1, micro_f1, sweep_sparsity, write_heatmap_csv, SweepRow};
use learnsparse::graph::{edge_homophily, homophily_report, save_graph, write_subgraph_csv, Graph, HomophilyReport};
use learnsparse::rng::rng_from_seed;
use learnsparse::theory::{
    check_adjacency_error, check_common_edge_bounds, check_gcn_embedding_error, contractive_weights, dirichlet, one_hot,
    random_test_graph, uniform, BoundCheckReport,
};
use learnsparse::train::{
    evaluate, infer_ensemble, load_checkpoint, read_metrics_csv, sample_subgraph, save_checkpoint, write_metrics_csv,
    ModelState, Trainer,
};
use learnsparse::{Error, Method, Result, Split};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, GraphSource, PairKind};

/// Bumped whenever a field of [`Summary`] changes meaning or disappears.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub schema_version: u32,
    pub method: Method,
    pub conditional_updates: bool,
    pub seed: u64,
    pub q: f64,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub input_edge_homophily: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_t: f64,
    pub best_val_micro_f1: f64,
    pub epochs_to_converge: usize,
    pub converged: bool,
    /// Epochs in which every part updated the encoder.
    pub encoder_update_epochs: usize,
    pub train_micro_f1: f64,
    pub val_micro_f1: f64,
    pub test_micro_f1: f64,
    pub test_macro_f1: f64,
    /// Mean edge homophily of the inference subgraphs.
    pub subgraph_edge_homophily: f64,
}

fn create_dir(d: &Path) -> Result<()> {
    fs::create_dir_all(d).map_err(|e| Error::Config(format!("cannot create {}: {e}", d.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn load_state(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<ModelState> {
    let path = checkpoint.map_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE), Path::to_path_buf);
    load_checkpoint(&path)
}

pub fn train(cfg: &ExperimentConfig, conditional: bool, resume: bool) -> Result<Summary> {
    let g = cfg.load_graph()?;
    let mut run = cfg.run.clone();
    run.conditional_updates |= conditional;
    create_dir(&cfg.out_dir)?;
    let ckpt = cfg.out_dir.join(CHECKPOINT_FILE);
    let metrics_path = cfg.out_dir.join(METRICS_FILE);

    let mut t = if resume {
        let state = load_checkpoint(&ckpt)?;
        let mut metrics = read_metrics_csv(&metrics_path)?;
        metrics.truncate(state.epoch);
        Trainer::resume(&g, &run, state, metrics)?
    } else {
        Trainer::new(&g, &run)?
    };
    while !t.is_done() {
        if let Err(e) = t.step() {
            write_metrics_csv(&metrics_path, &t.metrics)?;
            return Err(e);
        }
    }
    let done = t.finish();
    write_metrics_csv(&metrics_path, &done.metrics)?;
    save_checkpoint(&done.state, &ckpt)?;

    let eval = evaluate(&done.state, &g, &run)?;
    let s = &done.state;
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        method: run.method,
        conditional_updates: run.conditional_updates,
        seed: run.seed,
        q: run.q,
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        input_edge_homophily: edge_homophily(&g)?,
        epochs_run: s.epoch,
        best_epoch: s.best_epoch,
        best_t: s.best_t,
        best_val_micro_f1: s.best_val_f1,
        epochs_to_converge: done.epochs_to_converge,
        converged: s.converged_at.is_some(),
        encoder_update_epochs: done.metrics.iter().filter(|m| m.encoder_updated).count(),
        train_micro_f1: eval.train_micro_f1,
        val_micro_f1: eval.val_micro_f1,
        test_micro_f1: eval.test_micro_f1,
        test_macro_f1: eval.test_macro_f1,
        subgraph_edge_homophily: eval.subgraph_edge_homophily,
    };
    write_json(&cfg.out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Serialize)]
struct InferenceReport {
    schema_version: u32,
    ensemble: usize,
    train_micro_f1: f64,
    val_micro_f1: f64,
    test_micro_f1: f64,
    test_macro_f1: f64,
    subgraph_edge_homophily: f64,
}

type F1 = fn(&[usize], &[usize], &[bool]) -> Result<f64>;

fn split_f1(g: &Graph, pred: &[usize], s: Split, f: F1) -> Result<f64> {
    let mask = g.mask(s);
    if mask.iter().any(|&m| m) {
        f(pred, g.labels(), &mask)
    } else {
        Ok(0.0)
    }
}

/// Writes `predictions.csv` (`node,split,label,predicted,p_0..`) and
/// `inference.json`.
pub fn infer(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<f64> {
    let g = cfg.load_graph()?;
    let state = load_state(cfg, checkpoint)?;
    let inf = infer_ensemble(&state, &g, &cfg.run)?;
    create_dir(&cfg.out_dir)?;

    let mut csv = String::from("node,split,label,predicted");
    for c in 0..g.num_classes() {
        csv.push_str(&format!(",p_{c}"));
    }
    csv.push('\n');
    for u in 0..g.num_nodes() {
        csv.push_str(&format!("{u},{},{},{}", g.splits()[u].as_str(), g.labels()[u], inf.labels[u]));
        for p in inf.probs.row(u) {
            csv.push_str(&format!(",{p:?}"));
        }
        csv.push('\n');
    }
    let path = cfg.out_dir.join("predictions.csv");
    fs::write(&path, csv).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;

    let report = InferenceReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        ensemble: cfg.run.ensemble,
        train_micro_f1: split_f1(&g, &inf.labels, Split::Train, micro_f1)?,
        val_micro_f1: split_f1(&g, &inf.labels, Split::Val, micro_f1)?,
        test_micro_f1: split_f1(&g, &inf.labels, Split::Test, micro_f1)?,
        test_macro_f1: split_f1(&g, &inf.labels, Split::Test, macro_f1)?,
        subgraph_edge_homophily: inf.subgraph_edge_homophily,
    };
    write_json(&cfg.out_dir.join("inference.json"), &report)?;
    Ok(report.test_micro_f1)
}

#[derive(Serialize)]
struct SparsifyReport {
    schema_version: u32,
    q: f64,
    seed: u64,
    edges: usize,
    homophily: HomophilyReport,
}

pub struct SparsifyArgs<'a> {
    pub q: Option<f64>,
    pub seed: Option<u64>,
    pub checkpoint: Option<&'a Path>,
    pub output: Option<PathBuf>,
}

/// Writes one subgraph as `u,v,weight` plus a homophily report next to it
/// (same name, `.json` extension). Returns the CSV path and edge count.
pub fn sparsify(cfg: &ExperimentConfig, args: SparsifyArgs) -> Result<(PathBuf, usize)> {
    let g = cfg.load_graph()?;
    let state = load_state(cfg, args.checkpoint)?;
    let q = args.q.unwrap_or(cfg.run.q);
    let seed = args.seed.unwrap_or(cfg.run.seed);
    let sub = sample_subgraph(&state, &g, &cfg.run, q, seed)?;
    let out = args.output.unwrap_or_else(|| cfg.out_dir.join("subgraph.csv"));
    if let Some(parent) = out.parent() {
        create_dir(parent)?;
    }
    write_subgraph_csv(&out, &g, &sub.edge_indices, &sub.edge_weights)?;
    let kept = g.with_edges(sub.edge_indices.iter().map(|&e| g.edges()[e]))?;
    let report = SparsifyReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        q,
        seed,
        edges: sub.edge_indices.len(),
        homophily: homophily_report(&kept)?,
    };
    write_json(&out.with_extension("json"), &report)?;
    Ok((out, report.edges))
}

/// One sweep result with the homophily of the graph it came from.
#[derive(Serialize)]
struct SweepRecord {
    target_h: Option<f64>,
    input_edge_homophily: f64,
    method: Method,
    q: f64,
    seed: u64,
    test_micro_f1: f64,
    test_macro_f1: f64,
    epochs_to_converge: usize,
    subgraph_edge_homophily: f64,
}

/// Writes `sweep.csv` and one `heatmap_<method>.csv` pivot (rows: graph
/// homophily, columns: q, cells: mean test micro-F1).
pub fn sweep(cfg: &ExperimentConfig) -> Result<usize> {
    let graphs: Vec<(Option<f64>, Graph)> = if cfg.sweep.target_h.is_empty() {
        vec![(None, cfg.load_graph()?)]
    } else {
        let GraphSource::Homophily(base) = cfg.graph_source()? else {
            return Err(Error::Config("sweep.target_h needs a [graph.homophily] source".into()));
        };
        cfg.sweep
            .target_h
            .iter()
            .map(|&h| {
                let mut s = base.clone();
                s.target_h = h;
                Ok((Some(h), s.generate()?))
            })
            .collect::<Result<_>>()?
    };
    create_dir(&cfg.out_dir)?;
    let mut cells: Vec<(f64, SweepRow)> = Vec::new();
    let mut records = Vec::new();
    for (target, g) in &graphs {
        let h_in = edge_homophily(g)?;
        for row in sweep_sparsity(g, &cfg.sweep.methods, &cfg.sweep.qs, &cfg.sweep.seeds, &cfg.run)? {
            records.push(SweepRecord {
                target_h: *target,
                input_edge_homophily: h_in,
                method: row.method,
                q: row.q,
                seed: row.seed,
                test_micro_f1: row.test_micro_f1,
                test_macro_f1: row.test_macro_f1,
                epochs_to_converge: row.epochs_to_converge,
                subgraph_edge_homophily: row.subgraph_edge_homophily,
            });
            cells.push((target.unwrap_or(h_in), row));
        }
    }
    let path = cfg.out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for r in &records {
        w.serialize(r).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for &m in &cfg.sweep.methods {
        let mine: Vec<(f64, SweepRow)> = cells.iter().filter(|c| c.1.method == m).cloned().collect();
        write_heatmap_csv(cfg.out_dir.join(format!("heatmap_{}.csv", m.as_str())), &mine)?;
    }
    Ok(records.len())
}

/// Writes the configured generator's graph as a graph directory.
pub fn gen(cfg: &ExperimentConfig, output: Option<PathBuf>) -> Result<(PathBuf, HomophilyReport)> {
    if let GraphSource::Dir(d) = cfg.graph_source()? {
        return Err(Error::Config(format!(
            "gen needs a generator source, the config points at the directory {}",
            d.display()
        )));
    }
    let g = cfg.load_graph()?;
    let dir = output.unwrap_or_else(|| cfg.out_dir.join("graph"));
    create_dir(&dir)?;
    save_graph(&g, &dir)?;
    Ok((dir, homophily_report(&g)?))
}

#[derive(Serialize)]
struct PairResult {
    pair: String,
    reports: Vec<BoundCheckReport>,
}

#[derive(Serialize)]
struct TheoryReport {
    schema_version: u32,
    pairs: usize,
    common_edges_hold: usize,
    adjacency_error_hold: usize,
    gcn_embedding_error_hold: usize,
    all_hold: bool,
    results: Vec<PairResult>,
}

/// Runs the three bound checks on every configured pair; writes
/// `theory.json`. Returns whether every report holds.
pub fn theory(cfg: &ExperimentConfig) -> Result<bool> {
    let t = &cfg.theory;
    let adj_graph = random_test_graph(t.adjacency_nodes, t.edges, 4, t.seed)?;
    let gcn_graph = random_test_graph(t.gcn_nodes, t.edges, t.gcn_features, t.seed.wrapping_add(1))?;
    let weights = contractive_weights(t.gcn_features, t.gcn_depth, t.alpha, t.seed.wrapping_add(2))?;
    let pairs: Vec<(String, Vec<f64>, Vec<f64>)> = match t.distributions {
        PairKind::Dirichlet => {
            let mut rng = rng_from_seed(t.seed);
            (0..t.pairs)
                .map(|i| {
                    Ok((
                        format!("dirichlet_{i}"),
                        dirichlet(t.edges, t.concentration, &mut rng)?,
                        dirichlet(t.edges, t.concentration, &mut rng)?,
                    ))
                })
                .collect::<Result<_>>()?
        }
        PairKind::Uniform => vec![("uniform".into(), uniform(t.edges), uniform(t.edges))],
        PairKind::OneHot => vec![("one_hot".into(), one_hot(t.edges, 0), one_hot(t.edges, 0))],
    };

    let mut results = Vec::with_capacity(pairs.len());
    for (i, (name, a, b)) in pairs.into_iter().enumerate() {
        let seed = t.seed.wrapping_add(i as u64);
        results.push(PairResult {
            pair: name,
            reports: vec![
                check_common_edge_bounds(&a, &b, t.k, t.overlap_trials, seed)?,
                check_adjacency_error(&adj_graph, &a, &b, t.k, t.matrix_trials, seed)?,
                check_gcn_embedding_error(&gcn_graph, &weights, t.alpha, &a, &b, t.k, t.matrix_trials, seed)?,
            ],
        });
    }
    let holds = |i: usize| results.iter().filter(|r| r.reports[i].holds).count();
    let report = TheoryReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        pairs: results.len(),
        common_edges_hold: holds(0),
        adjacency_error_hold: holds(1),
        gcn_embedding_error_hold: holds(2),
        all_hold: results.iter().all(|r| r.reports.iter().all(|x| x.holds)),
        results,
    };
    create_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("theory.json"), &report)?;
    println!(
        "{} pairs: common-edge bounds hold {}, adjacency {}, gcn {}",
        report.pairs, report.common_edges_hold, report.adjacency_error_hold, report.gcn_embedding_error_hold
    );
    Ok(report.all_hold)
}

pub fn dump_defaults() -> String {
    let body = toml::to_string_pretty(&ExperimentConfig::default()).expect("defaults serialize");
    format!(
        "# Default experiment configuration. Every key is optional except out_dir;\n\
         # replace [graph.moon] with [graph] dir = \"...\" or [graph.homophily].\n{body}"
    )
}
