//! Central finite differences against the tape on the full learned
//! pipeline: edge scorer, gathered sample weights, weighted GCN, total loss.

use std::sync::Arc;

use learnsparse::encoder::{encode, score, EncoderParams};
use learnsparse::gnn::{forward, GnnParams};
use learnsparse::graph::{balanced_labels, gen_homophily_controlled};
use learnsparse::loss::{assortativity_var, consistency_var, cross_entropy_var, total_var, LossWeights};
use learnsparse::prior::compute_prior;
use learnsparse::rng::rng_from_seed;
use learnsparse::sampler::sample_multinomial_k;
use learnsparse::tensor::{Matrix, Tape};
use learnsparse::{Graph, Split};
use rand::Rng as _;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-6;

pub struct Report {
    pub probed: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

struct Setup {
    g: Graph,
    structural: Arc<Vec<(usize, usize)>>,
    sampled_ids: Arc<Vec<usize>>,
    sampled: Arc<Vec<(usize, usize)>>,
    us: Arc<Vec<usize>>,
    vs: Arc<Vec<usize>>,
    train: Vec<usize>,
    train_mask: Vec<bool>,
}

fn loss(s: &Setup, enc: &EncoderParams, gnn: &GnnParams, grads: bool) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let ev = enc.register(&mut tape);
    let gv = gnn.register(&mut tape);
    let x = tape.leaf(s.g.features().clone());
    let h = encode(&mut tape, &ev, x, s.structural.clone()).unwrap();
    let scores = score(&mut tape, &ev, h, s.us.clone(), s.vs.clone()).unwrap();
    let w = tape.gather_rows(scores, s.sampled_ids.clone()).unwrap();
    let out = forward(&mut tape, &gv, x, w, s.sampled.clone(), None).unwrap();
    let ce = cross_entropy_var(&mut tape, out.probs, s.g.labels(), &s.train).unwrap();
    let assor = assortativity_var(&mut tape, scores, s.g.edges(), s.g.labels(), &s.train_mask, false, false).unwrap();
    let cons = consistency_var(&mut tape, w, out.hidden, &s.sampled, false).unwrap();
    let (total, b) = total_var(&mut tape, ce, assor, cons, &LossWeights::default()).unwrap();
    if !grads {
        return (b.total, Vec::new());
    }
    let g = tape.backward(total).unwrap();
    let vars: Vec<_> = ev.all().into_iter().chain(gv.all()).collect();
    let params: Vec<&Matrix> = enc.tensors().into_iter().chain(gnn.tensors()).collect();
    (b.total, vars.iter().zip(params).map(|(&v, p)| g.get_or_zeros(v, p)).collect())
}

fn tensor_mut<'a>(enc: &'a mut EncoderParams, gnn: &'a mut GnnParams, i: usize) -> &'a mut Matrix {
    let n_enc = enc.tensors().len();
    if i < n_enc {
        enc.tensors_mut().into_iter().nth(i).unwrap()
    } else {
        gnn.tensors_mut().into_iter().nth(i - n_enc).unwrap()
    }
}

/// Probes `probes` random parameter entries on a 20-node graph and returns
/// the largest relative error `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn pipeline_gradient_check(seed: u64, probes: usize) -> Report {
    let g = gen_homophily_controlled(&balanced_labels(20, 2), 3, 0.5, 3, seed).unwrap();
    let mut rng = rng_from_seed(seed);
    let prior = compute_prior(&g).unwrap();
    let ids = |k: usize, rng: &mut _| {
        let mut v = sample_multinomial_k(&prior, k, rng).unwrap();
        v.sort_unstable();
        v
    };
    let structural_ids = ids(g.num_edges() / 2, &mut rng);
    let sampled_ids = ids(g.num_edges() / 3, &mut rng);
    let pick = |v: &[usize]| Arc::new(v.iter().map(|&e| g.edges()[e]).collect::<Vec<_>>());
    let train_mask = g.mask(Split::Train);
    let setup = Setup {
        structural: pick(&structural_ids),
        sampled: pick(&sampled_ids),
        sampled_ids: Arc::new(sampled_ids),
        us: Arc::new(g.edges().iter().map(|e| e.0).collect()),
        vs: Arc::new(g.edges().iter().map(|e| e.1).collect()),
        train: (0..g.num_nodes()).filter(|&i| train_mask[i]).collect(),
        train_mask,
        g,
    };

    let mut enc = EncoderParams::new(3, 6, 2, &mut rng);
    let mut gnn = GnnParams::new(3, 6, 2, 2, true, &mut rng);
    // Nonzero biases so their gradients are exercised too.
    for b in [&mut enc.b1, &mut enc.b2].into_iter().chain(gnn.biases.as_mut().unwrap()) {
        b.as_mut_slice().iter_mut().for_each(|x| *x = rng.random_range(-0.1..0.1));
    }

    let (_, analytic) = loss(&setup, &enc, &gnn, true);
    let sizes: Vec<usize> = analytic.iter().map(Matrix::len).collect();
    let total: usize = sizes.iter().sum();
    let mut report = Report {
        probed: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let names: Vec<String> = enc.names().into_iter().chain(gnn.names()).collect();
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut t = 0;
        while flat >= sizes[t] {
            flat -= sizes[t];
            t += 1;
        }
        let orig = tensor_mut(&mut enc, &mut gnn, t).as_slice()[flat];
        tensor_mut(&mut enc, &mut gnn, t).as_mut_slice()[flat] = orig + STEP;
        let (up, _) = loss(&setup, &enc, &gnn, false);
        tensor_mut(&mut enc, &mut gnn, t).as_mut_slice()[flat] = orig - STEP;
        let (down, _) = loss(&setup, &enc, &gnn, false);
        tensor_mut(&mut enc, &mut gnn, t).as_mut_slice()[flat] = orig;

        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[t].as_slice()[flat];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        report.probed += 1;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = format!("{}[{flat}]: analytic {a:e}, numeric {numeric:e}", names[t]);
        }
    }
    report
}
