//! On-disk experiment configuration.
//!
//! One TOML file per experiment. Relative paths inside it are resolved
//! against the directory holding the file. Unknown keys are errors.

use std::path::{Path, PathBuf};

use learnsparse::graph::{balanced_labels, gen_homophily_controlled, load_graph, Graph, MoonParams};
use learnsparse::{Error, Method, Result, RunConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Where every command writes its outputs.
    pub out_dir: PathBuf,
    /// Needed by every command except `theory-check`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSource>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            graph: Some(GraphSource::Moon(MoonParams::default())),
            run: RunConfig::default(),
            sweep: SweepConfig::default(),
            theory: TheoryConfig::default(),
        }
    }
}

/// `[graph] dir = "..."`, `[graph.moon]` or `[graph.homophily]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    /// A graph directory (edges.csv, features.csv, labels.csv, splits.csv, meta.json).
    Dir(PathBuf),
    Moon(MoonParams),
    Homophily(HomophilySpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomophilySpec {
    pub nodes: usize,
    pub classes: usize,
    /// Edges initiated per node.
    pub degree: usize,
    pub target_h: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for HomophilySpec {
    fn default() -> Self {
        Self {
            nodes: 1000,
            classes: 5,
            degree: 10,
            target_h: 0.2,
            feature_dim: 16,
            seed: 0,
        }
    }
}

impl HomophilySpec {
    pub fn generate(&self) -> Result<Graph> {
        gen_homophily_controlled(
            &balanced_labels(self.nodes, self.classes),
            self.degree,
            self.target_h,
            self.feature_dim,
            self.seed,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub methods: Vec<Method>,
    /// Edge percentages.
    pub qs: Vec<f64>,
    pub seeds: Vec<u64>,
    /// With a `homophily` graph source, regenerate the graph at each of
    /// these target homophilies. Empty means use the graph as configured.
    pub target_h: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Learned, Method::Random],
            qs: (1..=9).map(|i| 10.0 * i as f64).collect(),
            seeds: vec![0],
            target_h: Vec::new(),
        }
    }
}

/// Which distribution pairs `theory-check` draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// `pairs` independent symmetric Dirichlet pairs.
    Dirichlet,
    /// One matched uniform pair.
    Uniform,
    /// One matched one-hot pair.
    OneHot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub distributions: PairKind,
    pub pairs: usize,
    pub concentration: f64,
    /// Edge count of every distribution and test graph.
    pub edges: usize,
    pub k: usize,
    pub overlap_trials: usize,
    pub matrix_trials: usize,
    /// Nodes of the adjacency-error test graph.
    pub adjacency_nodes: usize,
    /// Nodes, feature width and depth of the GCN-error test network.
    pub gcn_nodes: usize,
    pub gcn_features: usize,
    pub gcn_depth: usize,
    /// Spectral norm of every GCN weight matrix.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            distributions: PairKind::Dirichlet,
            pairs: 100,
            concentration: 1.0,
            edges: 50,
            k: 10,
            overlap_trials: 100_000,
            matrix_trials: 1000,
            adjacency_nodes: 20,
            gcn_nodes: 30,
            gcn_features: 8,
            gcn_depth: 16,
            alpha: 0.9,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates `path`, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.out_dir = base.join(&cfg.out_dir);
        if let Some(GraphSource::Dir(d)) = &mut cfg.graph {
            *d = base.join(&*d);
        }
        cfg.run.validate()?;
        Ok(cfg)
    }

    pub fn graph_source(&self) -> Result<&GraphSource> {
        self.graph
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [graph] section".into()))
    }

    pub fn load_graph(&self) -> Result<Graph> {
        match self.graph_source()? {
            GraphSource::Dir(d) => load_graph(d),
            GraphSource::Moon(m) => m.generate(),
            GraphSource::Homophily(h) => h.generate(),
        }
    }
}
