//! Run configuration. Every field has a default; unknown keys are errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How edge scores become a sampling distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `w / sum(w)`, multinomial draws.
    Sum,
    /// `softmax(w / T)`, multinomial draws.
    SoftmaxTemp,
    /// Top-k of `(log p + g) / T` with Gumbel noise `g`.
    GumbelTopk,
}

/// Which edge distribution the downstream GCN is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Learned scorer with prior augmentation.
    Learned,
    /// Uniform over edges.
    Random,
    /// Proportional to `1/d_u + 1/d_v`.
    Degree,
    /// Proportional to effective resistance.
    EffectiveResistance,
    /// Every edge, no sampling.
    FullGraph,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Learned => "learned",
            Method::Random => "random",
            Method::Degree => "degree",
            Method::EffectiveResistance => "effective_resistance",
            Method::FullGraph => "full_graph",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "learned" => Method::Learned,
            "random" => Method::Random,
            "degree" => Method::Degree,
            "effective_resistance" => Method::EffectiveResistance,
            "full_graph" => Method::FullGraph,
            _ => return Err(Error::Config(format!("unknown method `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Percent of edges kept per sampled subgraph.
    pub q: f64,
    pub hidden: usize,
    /// Downstream GCN depth.
    pub layers: usize,
    /// Edge-encoder GCN depth.
    pub encoder_layers: usize,
    pub lr: f64,
    /// Dropout on GCN hidden layers during training.
    pub dropout: f64,
    pub gnn_bias: bool,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Also stop once the loss has converged.
    pub stop_on_convergence: bool,
    /// Weight of the learned distribution in the prior mixture.
    pub lambda: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Keep only the same-label term of the assortativity loss.
    pub assor_one_sided: bool,
    /// Sum instead of mean for the assortativity and consistency losses.
    pub sum_reduction: bool,
    pub t0: f64,
    pub t_min: f64,
    pub sampling: SamplingMode,
    /// Maximum induced edges per partition part.
    pub edge_cap: usize,
    /// Subgraphs averaged at inference.
    pub ensemble: usize,
    pub conditional_updates: bool,
    /// Node limit for exact effective resistance.
    pub er_cap: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Learned,
            q: 20.0,
            hidden: 256,
            layers: 2,
            encoder_layers: 2,
            lr: 1e-3,
            dropout: 0.2,
            gnn_bias: false,
            max_epochs: 500,
            patience: 50,
            stop_on_convergence: false,
            lambda: 0.5,
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 0.5,
            assor_one_sided: false,
            sum_reduction: false,
            t0: 1.0,
            t_min: 0.1,
            sampling: SamplingMode::SoftmaxTemp,
            edge_cap: 500_000,
            ensemble: 10,
            conditional_updates: false,
            er_cap: 3000,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.q > 0.0 && self.q <= 100.0) {
            return bad(format!("q = {} must be in (0, 100]", self.q));
        }
        if self.hidden == 0 || self.layers == 0 || self.encoder_layers == 0 {
            return bad("hidden, layers and encoder_layers must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr = {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout = {} must be in [0, 1)", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda = {} must be in [0, 1]", self.lambda));
        }
        for (name, a) in [("alpha1", self.alpha1), ("alpha2", self.alpha2), ("alpha3", self.alpha3)] {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("{name} = {a} must be in [0, 1]"));
            }
        }
        if !(self.t_min > 0.0 && self.t0 >= self.t_min && self.t0.is_finite()) {
            return bad(format!("need t0 >= t_min > 0, got t0 = {}, t_min = {}", self.t0, self.t_min));
        }
        if self.max_epochs == 0 || self.edge_cap == 0 || self.ensemble == 0 {
            return bad("max_epochs, edge_cap and ensemble must be positive".into());
        }
        Ok(())
    }

    /// `floor(q |E| / 100)`
    pub fn budget(&self, num_edges: usize) -> usize {
        budget(self.q, num_edges)
    }
}

/// `floor(q m / 100)`, computed so exact percentages do not round down.
pub fn budget(q: f64, m: usize) -> usize {
    ((q * m as f64) / 100.0 + 1e-9).floor() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<RunConfig>("q = 20.0\nbogus = 1\n").is_err());
        let c: RunConfig = toml::from_str("q = 50.0\nmethod = \"random\"\n").unwrap();
        assert_eq!((c.q, c.method), (50.0, Method::Random));
    }

    #[test]
    fn budget_floors() {
        assert_eq!(budget(20.0, 870), 174);
        assert_eq!(budget(100.0, 870), 870);
        assert_eq!(budget(10.0, 9), 0);
    }

    #[test]
    fn out_of_range_rejected() {
        let c = RunConfig { lambda: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { t0: 0.05, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
