use proboost::ensemble::argmax_rows;
use proboost::eval::accuracy;
use proboost::nn::layers::{Dense, Layer};
use proboost::nn::{build_dense_stack, train, LearnerMode, TrainConfig, WeakLearner};
use proboost::numerics::{PrngStream, Tensor};
use proboost::uncertainty::{epistemic_variance, mc_predict, UncertaintyConfig};

fn random(s: &mut PrngStream, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| s.standard_normal()).collect(),
    )
    .unwrap()
}

#[test]
fn mc_averaged_dropout_logits_converge_to_the_deterministic_pass() {
    let mut s = PrngStream::new(21, 0);
    let rate = 0.3;
    let layers = vec![
        Layer::Dense(Dense {
            weight: random(&mut s, &[4, 6]),
            bias: random(&mut s, &[6]),
        }),
        Layer::Dropout { rate },
        Layer::Dense(Dense {
            weight: random(&mut s, &[6, 3]),
            bias: random(&mut s, &[3]),
        }),
        Layer::Softmax,
    ];
    let net = WeakLearner::from_layers(layers, LearnerMode::McDropout { rate }, vec![4]).unwrap();
    let x = random(&mut s, &[2, 4]);
    let det = net.logits(&x, false, &s).unwrap();
    let draws = 20_000;
    let mut sum = vec![0.0; det.len()];
    let mut sq = vec![0.0; det.len()];
    for i in 0..draws {
        let z = net.logits(&x, true, &s.fork(i)).unwrap();
        for (j, v) in z.data().iter().enumerate() {
            sum[j] += v;
            sq[j] += v * v;
        }
    }
    let n = draws as f64;
    for j in 0..det.len() {
        let mean = sum[j] / n;
        let se = ((sq[j] / n - mean * mean) * n / (n - 1.0)).sqrt() / n.sqrt();
        assert!(
            (mean - det.data()[j]).abs() <= 3.0 * se,
            "output {j}: MC mean {mean} vs deterministic {} (se {se})",
            det.data()[j]
        );
    }
}

#[test]
fn deterministic_learner_separates_a_separable_toy_set() {
    // two classes split by the line x0 + x1 = 0 with a margin of 0.5
    let mut s = PrngStream::new(3, 0);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    while rows.len() < 80 {
        let p = [2.0 * s.standard_normal(), 2.0 * s.standard_normal()];
        let side = p[0] + p[1];
        if side.abs() < 0.5 {
            continue;
        }
        labels.push(usize::from(side > 0.0));
        rows.push(p.to_vec());
    }
    let x = Tensor::from_rows(&rows).unwrap();
    let mut net = build_dense_stack(
        2,
        &[8],
        2,
        LearnerMode::Deterministic,
        &mut PrngStream::new(4, 0),
    )
    .unwrap();
    let cfg = TrainConfig {
        patience: 300,
        ..TrainConfig::default()
    };
    train(
        &mut net,
        &x,
        &labels,
        &vec![1.0; labels.len()],
        &cfg,
        &PrngStream::new(5, 0),
    )
    .unwrap();
    let pred = argmax_rows(&net.predict_proba(&x).unwrap());
    assert_eq!(accuracy(&labels, &pred).unwrap(), 1.0);
}

#[test]
fn variance_error_shrinks_like_inverse_root_of_draws() {
    let mut s = PrngStream::new(8, 0);
    let x = random(&mut s, &[16, 5]);
    let err = |t: usize| -> f64 {
        let mut total = 0.0;
        for seed in 0..12u64 {
            let net = build_dense_stack(
                5,
                &[12],
                3,
                LearnerMode::mcd(),
                &mut PrngStream::new(seed, 1),
            )
            .unwrap();
            let score = |t: usize, tag: u64| {
                let d = mc_predict(
                    &net,
                    &x,
                    &UncertaintyConfig::new(t),
                    &PrngStream::new(seed, tag),
                )
                .unwrap();
                epistemic_variance(&d).unwrap().u
            };
            let reference = score(8192, 2);
            let u = score(t, 3);
            total += u
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / u.len() as f64;
        }
        total
    };
    // four times the draws should halve the error
    let ratio = err(32) / err(128);
    assert!((1.4..2.9).contains(&ratio), "error ratio {ratio}");
}
