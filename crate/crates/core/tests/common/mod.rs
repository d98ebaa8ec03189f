#![allow(dead_code)]

use proboost::nn::flipout::{inverse_softplus, FlipoutDense, GaussianPosterior};
use proboost::nn::layers::{Conv2d, Dense, Layer};
use proboost::nn::{elbo_loss, Batch, LearnerMode, WeakLearner};
use proboost::numerics::{PrngStream, Tensor};

pub const FD_STEP: f64 = 1e-5;

fn uniform(s: &mut PrngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * s.uniform()
}

fn random_tensor(s: &mut PrngStream, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| uniform(s, -scale, scale)).collect(),
    )
    .unwrap()
}

fn dense(s: &mut PrngStream, i: usize, o: usize) -> Layer {
    Layer::Dense(Dense {
        weight: random_tensor(s, &[i, o], 0.8),
        bias: random_tensor(s, &[o], 0.3),
    })
}

fn flipout(s: &mut PrngStream, i: usize, o: usize) -> Layer {
    let rho = |s: &mut PrngStream, shape: &[usize]| {
        let n: usize = shape.iter().product();
        let v = (0..n)
            .map(|_| inverse_softplus(uniform(s, 0.02, 0.3)))
            .collect();
        Tensor::new(shape.to_vec(), v).unwrap()
    };
    Layer::FlipoutDense(FlipoutDense {
        weight: GaussianPosterior::new(random_tensor(s, &[i, o], 0.8), rho(s, &[i, o]), 1.0)
            .unwrap(),
        bias: GaussianPosterior::new(random_tensor(s, &[o], 0.3), rho(s, &[o]), 1.0).unwrap(),
    })
}

/// Network families exercised by the gradient checks.
#[derive(Clone, Copy, Debug)]
pub enum Family {
    Dense,
    Conv,
    Dropout,
    Flipout,
}

pub const FAMILIES: [Family; 4] = [
    Family::Dense,
    Family::Conv,
    Family::Dropout,
    Family::Flipout,
];

/// Small random network (at most 100 parameters) with a matching batch.
pub fn random_case(family: Family, seed: u64) -> (WeakLearner, Tensor, Vec<usize>, Vec<f64>) {
    let mut s = PrngStream::new(seed, 77);
    let k = 2 + s.below(2) as usize;
    let (layers, mode, shape) = match family {
        Family::Dense => {
            let h = 2 + s.below(4) as usize;
            (
                vec![
                    dense(&mut s, 3, h),
                    Layer::Relu,
                    dense(&mut s, h, k),
                    Layer::Softmax,
                ],
                LearnerMode::Deterministic,
                vec![3],
            )
        }
        Family::Conv => {
            let conv = Layer::Conv2d(Conv2d {
                weight: random_tensor(&mut s, &[2, 1, 3, 3], 0.8),
                bias: random_tensor(&mut s, &[2], 0.3),
                stride: 1,
                padding: 1,
            });
            (
                vec![
                    conv,
                    Layer::Relu,
                    Layer::MaxPool2d { size: 2, stride: 2 },
                    Layer::Flatten,
                    dense(&mut s, 18, k),
                    Layer::Softmax,
                ],
                LearnerMode::Deterministic,
                vec![1, 6, 6],
            )
        }
        Family::Dropout => {
            let h = 3 + s.below(4) as usize;
            (
                vec![
                    dense(&mut s, 3, h),
                    Layer::Relu,
                    Layer::Dropout { rate: 0.3 },
                    dense(&mut s, h, k),
                    Layer::Softmax,
                ],
                LearnerMode::McDropout { rate: 0.3 },
                vec![3],
            )
        }
        Family::Flipout => {
            let h = 2 + s.below(3) as usize;
            (
                vec![
                    flipout(&mut s, 3, h),
                    Layer::Relu,
                    flipout(&mut s, h, k),
                    Layer::Softmax,
                ],
                LearnerMode::Variational,
                vec![3],
            )
        }
    };
    let net = WeakLearner::from_layers(layers, mode, shape.clone()).unwrap();
    assert!(
        net.num_params() <= 100,
        "{family:?} has {} params",
        net.num_params()
    );
    let batch = 3 + s.below(3) as usize;
    let mut row_shape = vec![batch];
    row_shape.extend(shape);
    let x = random_tensor(&mut s, &row_shape, 1.5);
    let labels = (0..batch).map(|_| s.below(k as u64) as usize).collect();
    let weights = (0..batch).map(|_| 1.0 + s.below(3) as f64).collect();
    (net, x, labels, weights)
}

/// Largest relative deviation between analytic and central-difference
/// gradients, with the denominator floored at 1e-6.
pub fn max_relative_error(
    net: &mut WeakLearner,
    loss: &dyn Fn(&WeakLearner) -> (f64, Vec<Tensor>),
) -> f64 {
    let (_, grads) = loss(net);
    let mut worst: f64 = 0.0;
    let n_params = net.params().len();
    for p in 0..n_params {
        for j in 0..net.params()[p].len() {
            let orig = net.params()[p].data()[j];
            net.params_mut()[p].data_mut()[j] = orig + FD_STEP;
            let up = loss(net).0;
            net.params_mut()[p].data_mut()[j] = orig - FD_STEP;
            let down = loss(net).0;
            net.params_mut()[p].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = grads[p].data()[j];
            let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Checks the weighted cross-entropy and, for flipout nets, the ELBO.
pub fn gradient_errors(family: Family, seed: u64) -> Vec<(&'static str, f64)> {
    let (mut net, x, labels, weights) = random_case(family, seed);
    let noise = PrngStream::new(seed, 5);
    let ce = |n: &WeakLearner| {
        let e = n
            .cross_entropy_loss(
                &Batch {
                    features: &x,
                    labels: &labels,
                    weights: &weights,
                },
                &noise,
            )
            .unwrap();
        (e.loss, e.grads)
    };
    let mut out = vec![("cross_entropy", max_relative_error(&mut net, &ce))];
    if matches!(family, Family::Flipout) {
        let elbo = |n: &WeakLearner| {
            let b = Batch {
                features: &x,
                labels: &labels,
                weights: &weights,
            };
            let e = elbo_loss(n, &b, 2, 0.25, &noise).unwrap();
            (e.loss, e.grads)
        };
        out.push(("elbo", max_relative_error(&mut net, &elbo)));
    }
    out
}

/// Eq. 11 evaluated with explicit loops over samples, classes and draws.
pub fn brute_force_variance(samples: &[Vec<Vec<f64>>]) -> Vec<f64> {
    let t = samples.len();
    let n = samples[0].len();
    let k = samples[0][0].len();
    (0..n)
        .map(|i| {
            let mut total = 0.0;
            for y in 0..k {
                let mut mean = 0.0;
                for s in samples {
                    mean += s[i][y];
                }
                mean /= t as f64;
                let mut var = 0.0;
                for s in samples {
                    var += (s[i][y] - mean) * (s[i][y] - mean);
                }
                total += var / t as f64;
            }
            total
        })
        .collect()
}

/// Random probability rows.
pub fn random_probs(s: &mut PrngStream, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..k).map(|_| s.uniform() + 1e-3).collect();
            let z: f64 = raw.iter().sum();
            raw.iter().map(|v| v / z).collect()
        })
        .collect()
}

/// Pairwise-comparison AUC: share of (positive, negative) pairs ranked
/// correctly, ties counting one half.
pub fn brute_force_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &q in neg {
            wins += if p > q {
                1.0
            } else if p == q {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}
