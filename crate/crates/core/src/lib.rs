//! Supervised graph sparsification.
//!
//! The crate learns a probability distribution over the edges of a graph,
//! draws sparse subgraphs with a user-chosen edge budget from it, and trains
//! an edge-weighted GCN on those subgraphs. The pieces are:
//!
//! - [`graph`]: CSR graphs, homophily measures, synthetic generators, CSV I/O
//! - [`tensor`]: dense matrices, a small reverse-mode tape, Adam
//! - [`prior`]: degree-proportionate edge prior and the locality partitioner
//! - [`encoder`]: the edge scorer and its normalizations / annealing
//! - [`sampler`]: prior augmentation, multinomial and Gumbel top-k sampling
//! - [`gnn`]: the weighted downstream GCN
//! - [`loss`]: cross-entropy, assortativity and consistency losses
//! - [`train`]: training loops, ensemble inference, checkpoints
//! - [`baselines`]: fixed-distribution samplers, F1 metrics, sparsity sweeps
//! - [`theory`]: Monte Carlo checks of the common-edge and embedding bounds

pub mod baselines;
pub mod config;
pub mod encoder;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod loss;
pub mod prior;
pub mod rng;
pub mod sampler;
pub mod tensor;
pub mod theory;
pub mod train;

pub use config::{Method, RunConfig, SamplingMode};
pub use error::{Error, Result};
pub use graph::{Graph, Split};
pub use tensor::Matrix;
