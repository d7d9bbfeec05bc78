#![allow(dead_code)]

use depthsign::autoencoder::{ae_gradient, ae_objective, AeHyper, AutoencoderParams};
use depthsign::classifier::{xent_gradient, xent_objective, SoftmaxParams};
use depthsign::data::one_hot;
use depthsign::linalg::{rand_uniform, Matrix, RngState};
use depthsign::optim::ParamSet;
use depthsign::stack::{network_gradient, network_objective, EncoderLayer, StackedNetwork};

pub const FD_STEP: f64 = 1e-5;

/// Gradients this small are compared absolutely: below it, central
/// differences are dominated by rounding in the objective itself.
pub const REL_FLOOR: f64 = 1e-6;

/// Central differences of `f` with respect to every parameter, flattened
/// in tensor order.
pub fn numeric_gradient<P: ParamSet>(p: &P, step: f64, f: impl Fn(&P) -> f64) -> Vec<f64> {
    let mut probe = p.clone();
    let sizes: Vec<usize> = p.tensors().iter().map(|t| t.data().len()).collect();
    let mut out = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let orig = probe.tensors()[k].data()[i];
            probe.tensors_mut()[k].data_mut()[i] = orig + step;
            let up = f(&probe);
            probe.tensors_mut()[k].data_mut()[i] = orig - step;
            let down = f(&probe);
            probe.tensors_mut()[k].data_mut()[i] = orig;
            out.push((up - down) / (2.0 * step));
        }
    }
    out
}

pub fn flatten<P: ParamSet>(p: &P) -> Vec<f64> {
    p.tensors()
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect()
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`, maximized over entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

pub fn random_matrix(rng: &mut RngState, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    rand_uniform(rng, rows, cols, lo, hi).unwrap()
}

pub fn random_labels(rng: &mut RngState, n: usize, classes: usize) -> Vec<usize> {
    (0..n)
        .map(|_| (rng.uniform() * classes as f64) as usize % classes)
        .collect()
}

/// Macro ACC, BER and F1 by walking the samples once per class and applying
/// the textbook formulas. `None` marks a metric that is undefined because
/// some class never occurs in either labels or predictions (F1), or there
/// are no samples (all three).
pub fn brute_force_macro(truth: &[usize], pred: &[usize], classes: usize) -> [Option<f64>; 3] {
    let n = truth.len();
    if n == 0 {
        return [None; 3];
    }
    let (mut acc, mut ber, mut f1) = (0.0, 0.0, Some(0.0));
    for c in 0..classes {
        let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
            }
        }
        acc += (tp + tn) as f64 / (tp + fn_ + fp + tn) as f64;
        let fpr = if tn + fp == 0 {
            0.0
        } else {
            fp as f64 / (tn + fp) as f64
        };
        let fnr = if fn_ + tp == 0 {
            0.0
        } else {
            fn_ as f64 / (fn_ + tp) as f64
        };
        ber += 0.5 * (fpr + fnr);
        f1 = match f1 {
            None => None,
            Some(_) if tp + fp + fn_ == 0 => None,
            Some(s) if tp == 0 => Some(s),
            Some(s) => {
                let precision = tp as f64 / (tp + fp) as f64;
                let recall = tp as f64 / (tp + fn_) as f64;
                Some(s + 2.0 * (precision * recall) / (precision + recall))
            }
        };
    }
    let k = classes as f64;
    [Some(acc / k), Some(ber / k), f1.map(|s| s / k)]
}

/// NRMSE as a plain scalar loop over two flattened sequences.
pub fn loop_nrmse(y: &[f64], d: &[f64]) -> f64 {
    let n = d.len() as f64;
    let mut mean = 0.0;
    for v in d {
        mean += v;
    }
    mean /= n;
    let (mut var, mut sq) = (0.0, 0.0);
    for i in 0..d.len() {
        var += (d[i] - mean) * (d[i] - mean);
        sq += (y[i] - d[i]) * (y[i] - d[i]);
    }
    (sq / n).sqrt() / (var / n).sqrt()
}

/// Worst relative error between analytic and central-difference gradients
/// over random autoencoders with input 6, hidden 4 and 3 samples.
pub fn autoencoder_gradient_error(seeds: std::ops::Range<u64>) -> f64 {
    let mut worst = 0.0f64;
    for seed in seeds {
        let mut rng = RngState::new(seed);
        let p = AutoencoderParams {
            w_enc: random_matrix(&mut rng, 4, 6, -1.0, 1.0),
            b_enc: random_matrix(&mut rng, 4, 1, -0.5, 0.5),
            w_dec: random_matrix(&mut rng, 6, 4, -1.0, 1.0),
            b_dec: random_matrix(&mut rng, 6, 1, -0.5, 0.5),
        };
        let x = random_matrix(&mut rng, 6, 3, 0.0, 1.0);
        let hyp = AeHyper {
            hidden: 4,
            l2_weight: 0.05 * rng.uniform(),
            sparsity_target: 0.05 + 0.3 * rng.uniform(),
            sparsity_weight: 2.0 * rng.uniform(),
            ..AeHyper::default()
        };
        let analytic = flatten(&ae_gradient(&p, &x, &hyp).unwrap());
        let numeric = numeric_gradient(&p, FD_STEP, |q| ae_objective(q, &x, &hyp).unwrap());
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

/// Same for softmax heads with 4 classes, 6 features and 3 samples.
pub fn softmax_gradient_error(seeds: std::ops::Range<u64>) -> f64 {
    let mut worst = 0.0f64;
    for seed in seeds {
        let mut rng = RngState::new(seed);
        let p = SoftmaxParams {
            w: random_matrix(&mut rng, 4, 6, -1.0, 1.0),
            b: random_matrix(&mut rng, 4, 1, -1.0, 1.0),
        };
        let x = random_matrix(&mut rng, 6, 3, -1.0, 1.0);
        let t = one_hot(&random_labels(&mut rng, 3, 4), 4).unwrap();
        let l2 = 0.1 * rng.uniform();
        let analytic = flatten(&xent_gradient(&p, &x, &t, l2).unwrap());
        let numeric = numeric_gradient(&p, FD_STEP, |q| xent_objective(q, &x, &t, l2).unwrap());
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

/// Same for whole 6→4→3→2 stacks.
pub fn stack_gradient_error(seeds: std::ops::Range<u64>) -> f64 {
    let mut worst = 0.0f64;
    for seed in seeds {
        let mut rng = RngState::new(seed);
        let layer = |rng: &mut RngState, out, inp| EncoderLayer {
            w: random_matrix(rng, out, inp, -1.0, 1.0),
            b: random_matrix(rng, out, 1, -0.5, 0.5),
        };
        let encoders = vec![layer(&mut rng, 4, 6), layer(&mut rng, 3, 4)];
        let head = SoftmaxParams {
            w: random_matrix(&mut rng, 2, 3, -1.0, 1.0),
            b: random_matrix(&mut rng, 2, 1, -1.0, 1.0),
        };
        let net = StackedNetwork::new(encoders, head).unwrap();
        let x = random_matrix(&mut rng, 6, 3, 0.0, 1.0);
        let t = one_hot(&random_labels(&mut rng, 3, 2), 2).unwrap();
        let l2 = 0.1 * rng.uniform();
        let analytic = flatten(&network_gradient(&net, &x, &t, l2).unwrap());
        let numeric =
            numeric_gradient(&net, FD_STEP, |q| network_objective(q, &x, &t, l2).unwrap());
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}
