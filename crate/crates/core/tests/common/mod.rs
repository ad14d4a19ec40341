//! Randomized invariant checks shared by the property tests and the
//! acceptance run. Each `prop_*` runs its own `TestRunner`.
#![allow(dead_code)]

pub mod gradcheck;

use learnsparse::baselines::{
    degree_weighted_distribution, effective_resistance_distribution, effective_resistances, macro_f1, micro_f1,
    num_components, random_distribution,
};
use learnsparse::encoder::{anneal_temperature, encode_structural_embedding, normalize, score_edges, AnnealSchedule, EncoderParams};
use learnsparse::gnn::{gcn_forward, GnnParams};
use learnsparse::graph::{
    balanced_labels, edge_homophily, gen_homophily_controlled, homophily_report, load_graph, save_graph,
    subgraph_edge_homophily,
};
use learnsparse::loss::{total_loss, total_var, LossWeights};
use learnsparse::prior::{compute_prior, partition_graph};
use learnsparse::rng::rng_from_seed;
use learnsparse::sampler::{augment_with_prior, sample_gumbel_topk, sample_multinomial_k};
use learnsparse::tensor::{Adam, AdamConfig, Tape};
use learnsparse::train::{load_checkpoint, save_checkpoint, train, Trainer};
use learnsparse::{Graph, Matrix, RunConfig, SamplingMode, Split};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

pub const CASES: u32 = 100;

pub fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

/// Random simple graph: 2..25 nodes, up to `3n` candidate pairs (self-loops
/// dropped, duplicates merged), 1..4 classes and feature columns.
pub fn graph() -> impl Strategy<Value = Graph> {
    (2usize..25, 1usize..4, 1usize..4)
        .prop_flat_map(|(n, c, f)| {
            (
                Just(n),
                Just(c),
                Just(f),
                prop::collection::vec((0..n, 0..n), 1..3 * n),
                prop::collection::vec(-3.0f64..3.0, n * f),
                prop::collection::vec(0..c, n),
                prop::collection::vec(0u8..3, n),
            )
        })
        .prop_filter_map("needs an edge", |(n, c, f, pairs, x, labels, split)| {
            let edges: Vec<_> = pairs.into_iter().filter(|(u, v)| u != v).collect();
            if edges.is_empty() {
                return None;
            }
            let split = split
                .into_iter()
                .map(|s| [Split::Train, Split::Val, Split::Test][s as usize])
                .collect();
            Graph::new(n, edges, Matrix::from_vec(n, f, x).unwrap(), labels, split, Some(c)).ok()
        })
}

/// Strictly positive probability vector of length 1..60.
pub fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, 1..60).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn prop_csr_consistency(r: &mut TestRunner) -> Result<(), String> {
    r.run(&graph(), |g| {
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in g.edges() {
            prop_assert!(u < v, "edge ({u},{v}) not canonical");
            prop_assert!(seen.insert((u, v)), "duplicate edge ({u},{v})");
        }
        let mut incident = vec![0usize; g.num_nodes()];
        for &(u, v) in g.edges() {
            incident[u] += 1;
            incident[v] += 1;
        }
        prop_assert_eq!(g.csr_targets().len(), 2 * g.num_edges());
        for u in 0..g.num_nodes() {
            prop_assert_eq!(g.degree(u), incident[u]);
            for (&v, &e) in g.neighbors(u).iter().zip(g.neighbor_edges(u)) {
                prop_assert_eq!(g.edges()[e], (u.min(v), u.max(v)));
                prop_assert!(g.neighbors(v).contains(&u));
            }
        }
        prop_assert!(g.features().as_slice().iter().all(|x| x.is_finite()));
        prop_assert_eq!(g.splits().len(), g.num_nodes());
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_io_round_trip(r: &mut TestRunner) -> Result<(), String> {
    r.run(&graph(), |g| {
        let dir = tempfile::tempdir().unwrap();
        save_graph(&g, dir.path()).unwrap();
        let back = load_graph(dir.path()).unwrap();
        prop_assert_eq!(back.edges(), g.edges());
        prop_assert_eq!(back.labels(), g.labels());
        prop_assert_eq!(back.splits(), g.splits());
        prop_assert_eq!(back.num_classes(), g.num_classes());
        prop_assert_eq!(back.features().shape(), g.features().shape());
        for (a, b) in back.features().as_slice().iter().zip(g.features().as_slice()) {
            prop_assert!(close(*a, *b, 1e-12));
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_homophily_ranges(r: &mut TestRunner) -> Result<(), String> {
    r.run(&graph(), |g| {
        let rep = homophily_report(&g).unwrap();
        prop_assert!((0.0..=1.0).contains(&rep.node_homophily));
        prop_assert!((0.0..=1.0).contains(&rep.edge_homophily));
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&rep.adjusted_homophily));
        prop_assert_eq!(rep.is_heterophilic, rep.adjusted_homophily <= 0.5);
        let all: Vec<usize> = (0..g.num_edges()).collect();
        prop_assert!(close(subgraph_edge_homophily(&g, &all).unwrap(), edge_homophily(&g).unwrap(), 1e-15));
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_pure_homophily_generator(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(20usize..80, 2usize..5, 1usize..5, any::<u64>()), |(n, c, d, seed)| {
        let g = gen_homophily_controlled(&balanced_labels(n, c), d, 1.0, c, seed).unwrap();
        prop_assert_eq!(edge_homophily(&g).unwrap(), 1.0);
        let again = gen_homophily_controlled(&balanced_labels(n, c), d, 1.0, c, seed).unwrap();
        prop_assert_eq!(again, g);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_distributions_normalized(r: &mut TestRunner) -> Result<(), String> {
    r.run(&graph(), |g| {
        let prior = compute_prior(&g).unwrap();
        for p in [
            prior.clone(),
            random_distribution(&g).unwrap(),
            degree_weighted_distribution(&g).unwrap(),
            effective_resistance_distribution(&g, 100).unwrap(),
        ] {
            prop_assert_eq!(p.len(), g.num_edges());
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!(close(p.iter().sum::<f64>(), 1.0, 1e-9));
        }
        // Proportional to 1/d_u + 1/d_v.
        let ratio = |e: usize| {
            let (u, v) = g.edges()[e];
            prior[e] / (1.0 / g.degree(u) as f64 + 1.0 / g.degree(v) as f64)
        };
        let r0 = ratio(0);
        for e in 1..g.num_edges() {
            prop_assert!(close(ratio(e), r0, 1e-12 * r0.max(1.0)));
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_foster(r: &mut TestRunner) -> Result<(), String> {
    r.run(&graph(), |g| {
        let res = effective_resistances(&g, 100).unwrap();
        let sum: f64 = res.iter().sum();
        let expected = (g.num_nodes() - num_components(&g)) as f64;
        prop_assert!(close(sum, expected, 1e-8), "sum R = {sum}, expected {expected}");
        prop_assert!(res.iter().all(|&x| x > 0.0 && x <= 1.0 + 1e-9));
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_partition_cover(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(graph(), 1usize..12, any::<u64>()), |(g, cap, seed)| {
        let p = partition_graph(&g, cap, seed).unwrap();
        let mut owner = vec![None; g.num_nodes()];
        for (pi, part) in p.parts.iter().enumerate() {
            for &u in &part.nodes {
                prop_assert!(owner[u].is_none(), "node {u} in two parts");
                owner[u] = Some(pi);
            }
        }
        prop_assert!(owner.iter().all(|o| o.is_some()));
        prop_assert!(owner.iter().zip(&p.assignment).all(|(o, &a)| *o == Some(a)));
        let mut edge_part = vec![None; g.num_edges()];
        for (pi, part) in p.parts.iter().enumerate() {
            for &e in &part.edges {
                prop_assert!(edge_part[e].is_none());
                edge_part[e] = Some(pi);
            }
        }
        for (e, &(u, _)) in g.edges().iter().enumerate() {
            prop_assert_eq!(edge_part[e], Some(p.assignment[u]));
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_normalize(r: &mut TestRunner) -> Result<(), String> {
    let scores = prop::collection::vec(1e-9f64..1.0 - 1e-9, 1..80);
    r.run(&(scores, 0.01f64..5.0), |(w, t)| {
        for mode in [SamplingMode::Sum, SamplingMode::SoftmaxTemp] {
            let d = normalize(&w, mode, t).unwrap();
            prop_assert!(d.probs.iter().all(|&p| p >= 0.0));
            prop_assert!(close(d.probs.iter().sum::<f64>(), 1.0, 1e-9));
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_augmentation(r: &mut TestRunner) -> Result<(), String> {
    let pair = distribution().prop_flat_map(|p| {
        let n = p.len();
        (Just(p), prop::collection::vec(0.0f64..1.0, n), 0.0f64..=1.0)
    });
    r.run(&pair, |(prior, raw, lambda)| {
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = if s > 0.0 { raw.iter().map(|x| x / s).collect() } else { prior.clone() };
        let a = augment_with_prior(&p, &prior, lambda).unwrap();
        prop_assert!(close(a.iter().sum::<f64>(), 1.0, 1e-9));
        for i in 0..a.len() {
            prop_assert!(close(a[i], lambda * p[i] + (1.0 - lambda) * prior[i], 1e-15));
            if lambda < 1.0 {
                prop_assert!(a[i] > 0.0);
            }
        }
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_sampling(r: &mut TestRunner) -> Result<(), String> {
    let input = distribution().prop_flat_map(|p| {
        let n = p.len();
        (Just(p), 0..=n, any::<u64>(), 0.05f64..2.0)
    });
    r.run(&input, |(p, k, seed, t)| {
        for draw in [
            sample_multinomial_k(&p, k, &mut rng_from_seed(seed)).unwrap(),
            sample_gumbel_topk(&p, k, t, true, &mut rng_from_seed(seed)).unwrap(),
        ] {
            prop_assert_eq!(draw.len(), k);
            let mut d = draw.clone();
            d.sort_unstable();
            d.dedup();
            prop_assert_eq!(d.len(), k);
            prop_assert!(draw.iter().all(|&i| i < p.len()));
        }
        prop_assert_eq!(
            sample_multinomial_k(&p, k, &mut rng_from_seed(seed)).unwrap(),
            sample_multinomial_k(&p, k, &mut rng_from_seed(seed)).unwrap()
        );
        prop_assert_eq!(
            sample_gumbel_topk(&p, k, t, true, &mut rng_from_seed(seed)).unwrap(),
            sample_gumbel_topk(&p, k, t, true, &mut rng_from_seed(seed)).unwrap()
        );
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_scores_and_predictions(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(graph(), 1usize..6, 1usize..4, any::<u64>()), |(g, hidden, layers, seed)| {
        let mut rng = rng_from_seed(seed);
        let enc = EncoderParams::new(g.feature_dim(), hidden, layers, &mut rng);
        let all: Vec<usize> = (0..g.num_edges()).collect();
        let h = encode_structural_embedding(&enc, &g, &all).unwrap();
        let w = score_edges(&enc, &h, &g).unwrap();
        prop_assert!(w.iter().all(|&x| x > 0.0 && x < 1.0));

        let gnn = GnnParams::new(g.feature_dim(), hidden, g.num_classes(), layers, seed % 2 == 0, &mut rng);
        let k = 1 + (seed as usize % g.num_edges());
        let idx = sample_multinomial_k(&compute_prior(&g).unwrap(), k, &mut rng).unwrap();
        let edges: Vec<_> = idx.iter().map(|&e| g.edges()[e]).collect();
        let weights: Vec<f64> = idx.iter().map(|&e| w[e]).collect();
        let out = gcn_forward(&gnn, g.features(), &edges, &weights, None).unwrap();
        prop_assert_eq!(out.probs.shape(), (g.num_nodes(), g.num_classes()));
        for i in 0..g.num_nodes() {
            let row = out.probs.row(i);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!(close(row.iter().sum::<f64>(), 1.0, 1e-9));
        }
        prop_assert!(out.hidden.is_finite());
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_loss_combination(r: &mut TestRunner) -> Result<(), String> {
    let inputs = (0.0f64..10.0, 0.0f64..10.0, 0.0f64..10.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0);
    r.run(&inputs, |(ce, assor, cons, a1, a2, a3)| {
        let w = LossWeights {
            alpha1: a1,
            alpha2: a2,
            alpha3: a3,
        };
        let l = total_loss(ce, assor, cons, &w).unwrap();
        prop_assert!(close(l.total, a1 * ce + a2 * assor + a3 * cons, 1e-12));
        let mut tape = Tape::new();
        let (c, a, s) = (
            tape.leaf(Matrix::scalar(ce)),
            tape.leaf(Matrix::scalar(assor)),
            tape.leaf(Matrix::scalar(cons)),
        );
        let (_, b) = total_var(&mut tape, c, a, s, &w).unwrap();
        prop_assert!(close(b.total, l.total, 1e-12));
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_f1_bounds(r: &mut TestRunner) -> Result<(), String> {
    let input = (1usize..60, 1usize..5).prop_flat_map(|(n, c)| {
        (
            prop::collection::vec(0..c, n),
            prop::collection::vec(0..c, n),
            prop::collection::vec(any::<bool>(), n),
        )
    });
    r.run(&input, |(pred, truth, mut mask)| {
        mask[0] = true;
        let mi = micro_f1(&pred, &truth, &mask).unwrap();
        let ma = macro_f1(&pred, &truth, &mask).unwrap();
        prop_assert!((0.0..=1.0).contains(&mi) && (0.0..=1.0).contains(&ma));
        let n = mask.iter().filter(|&&m| m).count();
        let hits = (0..pred.len()).filter(|&i| mask[i] && pred[i] == truth[i]).count();
        prop_assert!(close(mi, hits as f64 / n as f64, 1e-15));
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_annealing(r: &mut TestRunner) -> Result<(), String> {
    r.run(&(0.01f64..1.0, 0.0f64..5.0, 1usize..1000), |(t_min, extra, max_epochs)| {
        let t0 = t_min + extra;
        let s = AnnealSchedule::new(t0, t_min, max_epochs).unwrap();
        let mut last = f64::INFINITY;
        for e in 0..max_epochs + 5 {
            let t = anneal_temperature(&s, e);
            prop_assert!(t >= t_min && t <= t0 && t <= last);
            last = t;
        }
        prop_assert!(close(anneal_temperature(&s, max_epochs), t_min, 1e-9));
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_adam(r: &mut TestRunner) -> Result<(), String> {
    let shapes = prop::collection::vec((1usize..5, 1usize..5), 1..4);
    r.run(&(shapes, any::<u64>()), |(shapes, seed)| {
        let mut rng = rng_from_seed(seed);
        let mut params: Vec<Matrix> = shapes.iter().map(|&(a, b)| Matrix::glorot(a, b, a, b, &mut rng)).collect();
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default(), &params.iter().collect::<Vec<_>>());
        let names: Vec<String> = (0..params.len()).map(|i| format!("p{i}")).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        adam.step(&names, &mut params.iter_mut().collect::<Vec<_>>(), &zeros.iter().collect::<Vec<_>>())
            .unwrap();
        prop_assert_eq!(&params, &before);
        prop_assert_eq!(adam.step, 1);
        let ones: Vec<Matrix> = params.iter().map(|p| Matrix::filled(p.rows(), p.cols(), 1.0)).collect();
        adam.step(&names, &mut params.iter_mut().collect::<Vec<_>>(), &ones.iter().collect::<Vec<_>>())
            .unwrap();
        prop_assert_eq!(adam.step, 2);
        for ((m, v), p) in adam.m.iter().zip(&adam.v).zip(&params) {
            prop_assert_eq!(m.shape(), p.shape());
            prop_assert_eq!(v.shape(), p.shape());
        }
        prop_assert!(params.iter().zip(&before).all(|(a, b)| a != b));
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn tiny_config(seed: u64, hidden: usize) -> RunConfig {
    RunConfig {
        hidden,
        max_epochs: 2,
        ensemble: 2,
        seed,
        ..RunConfig::default()
    }
}

fn trainable() -> impl Strategy<Value = (Graph, u64, usize)> {
    (any::<u64>(), 1usize..6).prop_map(|(seed, hidden)| {
        let g = gen_homophily_controlled(&balanced_labels(24, 3), 3, 0.5, 3, seed).unwrap();
        (g, seed, hidden)
    })
}

pub fn prop_training_determinism(r: &mut TestRunner) -> Result<(), String> {
    r.run(&trainable(), |(g, seed, hidden)| {
        let cfg = tiny_config(seed, hidden);
        let a = train(&g, &cfg).unwrap();
        let b = train(&g, &cfg).unwrap();
        prop_assert_eq!(&a.metrics, &b.metrics);
        prop_assert_eq!(&a.state, &b.state);
        for m in &a.metrics {
            for f in [m.train_micro_f1, m.val_micro_f1, m.test_micro_f1, m.test_macro_f1] {
                prop_assert!((0.0..=1.0).contains(&f));
            }
        }
        prop_assert!((0.0..=1.0).contains(&a.state.best_val_f1));
        prop_assert!(a.state.best_t >= cfg.t_min && a.state.best_t <= cfg.t0);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

pub fn prop_checkpoint_round_trip(r: &mut TestRunner) -> Result<(), String> {
    r.run(&trainable(), |(g, seed, hidden)| {
        let mut t = Trainer::new(&g, &tiny_config(seed, hidden)).unwrap();
        t.step().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.ckpt");
        save_checkpoint(&t.state, &path).unwrap();
        prop_assert_eq!(&load_checkpoint(&path).unwrap(), &t.state);
        Ok(())
    })
    .map_err(|e| e.to_string())
}

/// Every suite, by name, for the acceptance run.
pub fn all_suites() -> Vec<(&'static str, fn(&mut TestRunner) -> Result<(), String>)> {
    vec![
        ("csr_consistency", prop_csr_consistency),
        ("io_round_trip", prop_io_round_trip),
        ("homophily_ranges", prop_homophily_ranges),
        ("pure_homophily_generator", prop_pure_homophily_generator),
        ("distributions_normalized", prop_distributions_normalized),
        ("foster", prop_foster),
        ("partition_cover", prop_partition_cover),
        ("normalize", prop_normalize),
        ("augmentation", prop_augmentation),
        ("sampling", prop_sampling),
        ("scores_and_predictions", prop_scores_and_predictions),
        ("loss_combination", prop_loss_combination),
        ("f1_bounds", prop_f1_bounds),
        ("annealing", prop_annealing),
        ("adam", prop_adam),
        ("training_determinism", prop_training_determinism),
        ("checkpoint_round_trip", prop_checkpoint_round_trip),
    ]
}
