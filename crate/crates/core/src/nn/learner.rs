use serde::{Deserialize, Serialize};

use super::flipout::{inverse_softplus, FlipoutDense, GaussianPosterior};
use super::layers::{Cache, Conv2d, Dense, Layer, LayerSpec};
use super::loss::{softmax_rows, weighted_nll_from_logits};
use crate::numerics::{PrngStream, Tensor};
use crate::{Error, Result};

/// Dropout rate used by Monte Carlo dropout learners.
pub const DEFAULT_DROPOUT: f64 = 0.3;
/// Initial posterior standard deviation of variational layers.
pub const POSTERIOR_INIT_STD: f64 = 0.05;
/// Standard deviation of the zero-mean Gaussian prior over weights and biases.
pub const PRIOR_STD: f64 = 1.0;

const INFERENCE_CHUNK: usize = 1024;

/// How a learner turns weights into predictions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LearnerMode {
    Deterministic,
    /// Dropout kept active at prediction time.
    McDropout {
        rate: f64,
    },
    /// Flipout layers with Gaussian weight posteriors.
    Variational,
}

impl LearnerMode {
    pub fn mcd() -> Self {
        LearnerMode::McDropout {
            rate: DEFAULT_DROPOUT,
        }
    }

    pub fn is_probabilistic(&self) -> bool {
        !matches!(self, LearnerMode::Deterministic)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerMode::Deterministic => "det",
            LearnerMode::McDropout { .. } => "mcd",
            LearnerMode::Variational => "vi",
        }
    }
}

/// Borrowed mini-batch.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub features: &'a Tensor,
    pub labels: &'a [usize],
    pub weights: &'a [f64],
}

/// A loss value with gradients in [`WeakLearner::params`] order.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub loss: f64,
    pub grads: Vec<Tensor>,
}

/// Sampled negative ELBO and its parts, each averaged over the MC draws.
#[derive(Clone, Debug)]
pub struct ElboEstimate {
    pub loss: f64,
    /// Scaled `log q(W) − log P(W)` part.
    pub kl: f64,
    /// Weighted `−log P(D|W)` part.
    pub nll: f64,
    pub grads: Vec<Tensor>,
}

/// A trainable probabilistic classifier: an ordered layer stack ending in a
/// softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakLearner {
    layers: Vec<Layer>,
    mode: LearnerMode,
    input_shape: Vec<usize>,
    n_classes: usize,
}

impl WeakLearner {
    pub fn from_layers(
        layers: Vec<Layer>,
        mode: LearnerMode,
        input_shape: Vec<usize>,
    ) -> Result<Self> {
        if !matches!(layers.last(), Some(Layer::Softmax)) {
            return Err(Error::invalid("layer stack must end with a softmax head"));
        }
        if layers[..layers.len() - 1]
            .iter()
            .any(|l| matches!(l, Layer::Softmax))
        {
            return Err(Error::invalid("softmax is only allowed as the final layer"));
        }
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.spec().output_shape(&shape)?;
        }
        let &[n_classes] = shape.as_slice() else {
            return Err(Error::shape(format!(
                "head produces {shape:?}, expected [classes]"
            )));
        };
        let weighted: Vec<usize> = (0..layers.len())
            .filter(|&i| !layers[i].params().is_empty())
            .collect();
        match mode {
            LearnerMode::Deterministic => {
                if layers.iter().any(Layer::is_stochastic) {
                    return Err(Error::invalid(
                        "deterministic learner contains stochastic layers",
                    ));
                }
            }
            LearnerMode::McDropout { rate } => {
                for w in weighted.windows(2) {
                    let covered = layers[w[0] + 1..w[1]]
                        .iter()
                        .any(|l| matches!(l, Layer::Dropout { rate: r } if *r == rate));
                    if !covered {
                        return Err(Error::invalid(format!(
                            "layer {} is not followed by dropout",
                            w[0]
                        )));
                    }
                }
                if layers.iter().any(|l| matches!(l, Layer::FlipoutDense(_))) {
                    return Err(Error::invalid("dropout learner contains flipout layers"));
                }
            }
            LearnerMode::Variational => {
                if !layers.iter().any(|l| matches!(l, Layer::FlipoutDense(_))) {
                    return Err(Error::invalid("variational learner has no flipout layer"));
                }
            }
        }
        Ok(WeakLearner {
            layers,
            mode,
            input_shape,
            n_classes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn mode(&self) -> LearnerMode {
        self.mode
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn stochastic_layer_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_stochastic()).count()
    }

    fn shaped_input(&self, x: &Tensor) -> Result<Tensor> {
        let want: usize = self.input_shape.iter().product();
        if x.row_len() != want {
            return Err(Error::shape(format!(
                "learner expects {:?} per sample, got {:?}",
                self.input_shape,
                &x.shape()[1..]
            )));
        }
        let mut shape = vec![x.rows()];
        shape.extend_from_slice(&self.input_shape);
        x.clone().reshape(shape)
    }

    /// Runs every layer before the softmax head; layer `i` draws its noise
    /// from `stream.fork(i)`.
    fn run(
        &self,
        x: Tensor,
        stochastic: bool,
        stream: &PrngStream,
        keep: bool,
    ) -> Result<(Tensor, Vec<Option<Cache>>)> {
        let mut h = x;
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers[..self.layers.len() - 1].iter().enumerate() {
            let mut noise = stream.fork(i as u64);
            let (out, cache) = layer.forward(h, stochastic, &mut noise, keep)?;
            h = out;
            caches.push(cache);
        }
        Ok((h, caches))
    }

    fn backprop(&self, caches: &[Option<Cache>], grad_logits: Tensor) -> Result<Vec<Tensor>> {
        let mut g = grad_logits;
        let mut per_layer: Vec<Vec<Tensor>> = vec![Vec::new(); caches.len()];
        for i in (0..caches.len()).rev() {
            let cache = caches[i].as_ref().expect("forward ran with caches");
            let (gx, gp) = self.layers[i].backward(cache, g, i > 0)?;
            per_layer[i] = gp;
            match gx {
                Some(gx) => g = gx,
                None => break,
            }
        }
        Ok(per_layer.into_iter().flatten().collect())
    }

    /// Pre-softmax scores for the whole batch in one pass.
    pub fn logits(&self, x: &Tensor, stochastic: bool, stream: &PrngStream) -> Result<Tensor> {
        let x = self.shaped_input(x)?;
        Ok(self.run(x, stochastic, stream, false)?.0)
    }

    /// Class probabilities, `[batch, classes]`. With `stochastic == false`
    /// dropout is off and flipout layers use their posterior means.
    ///
    /// Large batches are processed in chunks of 1024 rows; chunk `c` draws
    /// its noise from `stream.fork(c)`.
    pub fn forward(&self, x: &Tensor, stochastic: bool, stream: &PrngStream) -> Result<Tensor> {
        let x = self.shaped_input(x)?;
        let n = x.rows();
        if n <= INFERENCE_CHUNK {
            return Ok(softmax_rows(
                &self.run(x, stochastic, &stream.fork(0), false)?.0,
            ));
        }
        let mut out: Option<Tensor> = None;
        for (c, start) in (0..n).step_by(INFERENCE_CHUNK).enumerate() {
            let idx: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(n)).collect();
            let chunk = x.select_rows(&idx)?;
            let probs = softmax_rows(
                &self
                    .run(chunk, stochastic, &stream.fork(c as u64), false)?
                    .0,
            );
            out = Some(match out {
                None => probs,
                Some(acc) => acc.concat_rows(&probs)?,
            });
        }
        Ok(out.expect("n > 0"))
    }

    /// Deterministic class probabilities.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        self.forward(x, false, &PrngStream::new(0, 0))
    }

    /// Weighted cross-entropy normalised by `Σ w`, with gradients. Dropout is
    /// active whenever the learner has it (training-time behaviour).
    pub fn cross_entropy_loss(&self, batch: &Batch<'_>, stream: &PrngStream) -> Result<LossEval> {
        let x = self.shaped_input(batch.features)?;
        let (logits, caches) = self.run(x, true, stream, true)?;
        let (loss, g) = weighted_nll_from_logits(&logits, batch.labels, batch.weights, true)?;
        Ok(LossEval {
            loss,
            grads: self.backprop(&caches, g)?,
        })
    }

    /// Weighted mean NLL of the deterministic forward pass; no gradients.
    pub fn validation_loss(&self, batch: &Batch<'_>) -> Result<f64> {
        let n = batch.features.rows();
        let mut total = 0.0;
        for start in (0..n).step_by(INFERENCE_CHUNK) {
            let idx: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(n)).collect();
            let x = self.shaped_input(&batch.features.select_rows(&idx)?)?;
            let logits = self.run(x, false, &PrngStream::new(0, 0), false)?.0;
            let labels: Vec<usize> = idx.iter().map(|&i| batch.labels[i]).collect();
            let weights: Vec<f64> = idx.iter().map(|&i| batch.weights[i]).collect();
            total += weighted_nll_from_logits(&logits, &labels, &weights, false)?.0;
        }
        let wsum: f64 = batch.weights.iter().sum();
        if !(wsum > 0.0) {
            return Err(Error::invalid("sample weights sum to zero"));
        }
        Ok(total / wsum)
    }
}

/// Negated sampled ELBO over `n_mc` weight draws:
/// `mean_i [ kl_scale·(log q(Wⁱ|θ) − log P(Wⁱ)) − Σ_b w_b log P(y_b|x_b, Wⁱ) ]`.
///
/// Draw `i` uses `stream.fork(i)`. `kl_scale` is `1 / batches_per_epoch` in
/// training so that one epoch sums to the full-data objective.
pub fn elbo_loss(
    learner: &WeakLearner,
    batch: &Batch<'_>,
    n_mc: usize,
    kl_scale: f64,
    stream: &PrngStream,
) -> Result<ElboEstimate> {
    if learner.mode != LearnerMode::Variational {
        return Err(Error::invalid("ELBO needs a variational learner"));
    }
    if n_mc < 1 {
        return Err(Error::invalid("ELBO needs at least one Monte Carlo draw"));
    }
    let x = learner.shaped_input(batch.features)?;
    let mut grads: Vec<Tensor> = learner
        .params()
        .iter()
        .map(|p| Tensor::zeros(p.shape()))
        .collect();
    let (mut kl_total, mut nll_total) = (0.0, 0.0);
    for draw in 0..n_mc {
        let s = stream.fork(draw as u64);
        let (logits, caches) = learner.run(x.clone(), true, &s, true)?;
        let (nll, g) = weighted_nll_from_logits(&logits, batch.labels, batch.weights, false)?;
        let like_grads = learner.backprop(&caches, g)?;
        let mut kl = 0.0;
        let mut kl_grads = Vec::new();
        for (layer, cache) in learner.layers.iter().zip(&caches) {
            match (layer, cache) {
                (Layer::FlipoutDense(f), Some(Cache::Flipout(c))) => {
                    let (v, gs) = f.kl(c);
                    kl += v;
                    kl_grads.extend(gs);
                }
                _ => kl_grads.extend(layer.params().iter().map(|p| Tensor::zeros(p.shape()))),
            }
        }
        for ((acc, lg), kg) in grads.iter_mut().zip(&like_grads).zip(&kl_grads) {
            for ((a, l), k) in acc.data_mut().iter_mut().zip(lg.data()).zip(kg.data()) {
                *a += l + kl_scale * k;
            }
        }
        kl_total += kl_scale * kl;
        nll_total += nll;
    }
    let inv = 1.0 / n_mc as f64;
    for g in &mut grads {
        for v in g.data_mut() {
            *v *= inv;
        }
    }
    Ok(ElboEstimate {
        loss: (kl_total + nll_total) * inv,
        kl: kl_total * inv,
        nll: nll_total * inv,
        grads,
    })
}

fn glorot(init: &mut PrngStream, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| (2.0 * init.uniform() - 1.0) * limit)
        .collect();
    Tensor::new(shape.to_vec(), data).expect("positive shape")
}

fn dense_layer(init: &mut PrngStream, inputs: usize, units: usize, variational: bool) -> Layer {
    let w = glorot(init, &[inputs, units], inputs, units);
    if variational {
        let rho = inverse_softplus(POSTERIOR_INIT_STD);
        Layer::FlipoutDense(FlipoutDense {
            weight: GaussianPosterior::new(w, Tensor::filled(&[inputs, units], rho), PRIOR_STD)
                .expect("matching shapes"),
            bias: GaussianPosterior::new(
                Tensor::zeros(&[units]),
                Tensor::filled(&[units], rho),
                PRIOR_STD,
            )
            .expect("matching shapes"),
        })
    } else {
        Layer::Dense(Dense {
            weight: w,
            bias: Tensor::zeros(&[units]),
        })
    }
}

fn conv_layer(
    init: &mut PrngStream,
    in_c: usize,
    out_c: usize,
    kernel: usize,
    padding: usize,
) -> Layer {
    let w = glorot(
        init,
        &[out_c, in_c, kernel, kernel],
        in_c * kernel * kernel,
        out_c * kernel * kernel,
    );
    Layer::Conv2d(Conv2d {
        weight: w,
        bias: Tensor::zeros(&[out_c]),
        stride: 1,
        padding,
    })
}

/// LeNet-5 variant: conv(6,5,same) → pool → conv(16,5) → pool → conv(120,5)
/// → dense(84) → dense(classes) → softmax, with ReLU after every hidden
/// weighted layer. Dropout learners get a dropout layer after each of those.
///
/// `input_dims` is `[channels, height, width]`; 28×28 is the smallest
/// image the three convolution stages accept.
pub fn build_lenet_variant(
    input_dims: [usize; 3],
    n_classes: usize,
    mode: LearnerMode,
    init: &mut PrngStream,
) -> Result<WeakLearner> {
    let drop = match mode {
        LearnerMode::Variational => {
            return Err(Error::UnsupportedConfiguration(
                "variational learners are only available as dense stacks".into(),
            ))
        }
        LearnerMode::McDropout { rate } => Some(rate),
        LearnerMode::Deterministic => None,
    };
    let [c, h, w] = input_dims;
    // shape check before drawing any weights
    let probe = [
        LayerSpec::Conv2d {
            in_channels: c,
            out_channels: 6,
            kernel: 5,
            stride: 1,
            padding: 2,
        },
        LayerSpec::Maxpool2d { size: 2, stride: 2 },
        LayerSpec::Conv2d {
            in_channels: 6,
            out_channels: 16,
            kernel: 5,
            stride: 1,
            padding: 0,
        },
        LayerSpec::Maxpool2d { size: 2, stride: 2 },
        LayerSpec::Conv2d {
            in_channels: 16,
            out_channels: 120,
            kernel: 5,
            stride: 1,
            padding: 0,
        },
    ];
    let mut shape = vec![c, h, w];
    for spec in &probe {
        shape = spec.output_shape(&shape)?;
    }
    let flat: usize = shape.iter().product();

    let mut layers = Vec::new();
    let push_hidden = |layers: &mut Vec<Layer>, layer: Layer| {
        layers.push(layer);
        layers.push(Layer::Relu);
        if let Some(rate) = drop {
            layers.push(Layer::Dropout { rate });
        }
    };
    push_hidden(&mut layers, conv_layer(init, c, 6, 5, 2));
    layers.push(Layer::MaxPool2d { size: 2, stride: 2 });
    push_hidden(&mut layers, conv_layer(init, 6, 16, 5, 0));
    layers.push(Layer::MaxPool2d { size: 2, stride: 2 });
    push_hidden(&mut layers, conv_layer(init, 16, 120, 5, 0));
    layers.push(Layer::Flatten);
    push_hidden(&mut layers, dense_layer(init, flat, 84, false));
    layers.push(dense_layer(init, 84, n_classes, false));
    layers.push(Layer::Softmax);
    WeakLearner::from_layers(layers, mode, vec![c, h, w])
}

/// Fully connected stack: hidden ReLU layers then a softmax head. Variational
/// learners use flipout for every layer; dropout learners follow each hidden
/// layer with dropout.
pub fn build_dense_stack(
    input_len: usize,
    hidden: &[usize],
    n_classes: usize,
    mode: LearnerMode,
    init: &mut PrngStream,
) -> Result<WeakLearner> {
    if input_len == 0 || n_classes == 0 || hidden.contains(&0) {
        return Err(Error::invalid("layer sizes must be positive"));
    }
    let variational = mode == LearnerMode::Variational;
    let mut layers = Vec::new();
    let mut prev = input_len;
    for &units in hidden {
        layers.push(dense_layer(init, prev, units, variational));
        layers.push(Layer::Relu);
        if let LearnerMode::McDropout { rate } = mode {
            layers.push(Layer::Dropout { rate });
        }
        prev = units;
    }
    layers.push(dense_layer(init, prev, n_classes, variational));
    layers.push(Layer::Softmax);
    WeakLearner::from_layers(layers, mode, vec![input_len])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_x() -> Tensor {
        Tensor::from_rows(&[vec![0.5, -1.0], vec![1.5, 2.0], vec![-0.3, 0.1]]).unwrap()
    }

    #[test]
    fn lenet_output_shape() {
        let mut init = PrngStream::new(1, 0);
        let net = build_lenet_variant([1, 28, 28], 10, LearnerMode::mcd(), &mut init).unwrap();
        let x = Tensor::filled(&[2, 1, 28, 28], 0.5);
        let p = net.forward(&x, true, &PrngStream::new(2, 0)).unwrap();
        assert_eq!(p.shape(), &[2, 10]);
        for i in 0..2 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // flat 784-wide rows are accepted too
        let flat = Tensor::filled(&[1, 784], 0.5);
        assert_eq!(
            net.forward(&flat, false, &PrngStream::new(0, 0))
                .unwrap()
                .shape(),
            &[1, 10]
        );
    }

    #[test]
    fn lenet_restrictions() {
        let mut init = PrngStream::new(1, 0);
        assert!(matches!(
            build_lenet_variant([1, 28, 28], 10, LearnerMode::Variational, &mut init),
            Err(Error::UnsupportedConfiguration(_))
        ));
        assert!(matches!(
            build_lenet_variant([1, 20, 20], 10, LearnerMode::Deterministic, &mut init),
            Err(Error::Shape(_))
        ));
        let det =
            build_lenet_variant([1, 28, 28], 10, LearnerMode::Deterministic, &mut init).unwrap();
        assert_eq!(det.stochastic_layer_count(), 0);
        let mcd = build_lenet_variant([1, 28, 28], 10, LearnerMode::mcd(), &mut init).unwrap();
        assert_eq!(mcd.stochastic_layer_count(), 4);
    }

    #[test]
    fn dense_stack_shapes() {
        let mut init = PrngStream::new(3, 0);
        let vi = build_dense_stack(2, &[], 3, LearnerMode::Variational, &mut init).unwrap();
        assert_eq!(
            vi.specs(),
            vec![
                LayerSpec::FlipoutDense {
                    inputs: 2,
                    units: 3,
                    prior_std: PRIOR_STD
                },
                LayerSpec::Softmax,
            ]
        );
        let det = build_dense_stack(4, &[8], 2, LearnerMode::Deterministic, &mut init).unwrap();
        assert_eq!(det.num_params(), 4 * 8 + 8 + 8 * 2 + 2);
        assert_eq!(det.stochastic_layer_count(), 0);
    }

    #[test]
    fn zero_rate_dropout_matches_deterministic() {
        let det = build_dense_stack(
            2,
            &[5],
            3,
            LearnerMode::Deterministic,
            &mut PrngStream::new(8, 0),
        )
        .unwrap();
        let mcd0 = build_dense_stack(
            2,
            &[5],
            3,
            LearnerMode::McDropout { rate: 0.0 },
            &mut PrngStream::new(8, 0),
        )
        .unwrap();
        let s = PrngStream::new(1, 1);
        let a = det.forward(&toy_x(), false, &s).unwrap();
        let b = mcd0.forward(&toy_x(), true, &s).unwrap();
        let c = mcd0.forward(&toy_x(), false, &s).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn deterministic_forward_is_pure() {
        let vi = build_dense_stack(
            2,
            &[4],
            3,
            LearnerMode::Variational,
            &mut PrngStream::new(2, 0),
        )
        .unwrap();
        let a = vi.forward(&toy_x(), false, &PrngStream::new(1, 0)).unwrap();
        let b = vi
            .forward(&toy_x(), false, &PrngStream::new(99, 7))
            .unwrap();
        assert_eq!(a, b);
        let s1 = vi.forward(&toy_x(), true, &PrngStream::new(1, 0)).unwrap();
        let s2 = vi.forward(&toy_x(), true, &PrngStream::new(2, 0)).unwrap();
        assert_ne!(s1, s2);
    }

    #[test]
    fn zero_spread_flipout_equals_mean_product() {
        let mut vi = build_dense_stack(
            2,
            &[],
            2,
            LearnerMode::Variational,
            &mut PrngStream::new(5, 0),
        )
        .unwrap();
        if let Layer::FlipoutDense(f) = &mut vi.layers[0] {
            f.weight.rho = f.weight.rho.map(|_| -800.0);
            f.bias.rho = f.bias.rho.map(|_| -800.0);
        }
        let x = toy_x();
        let stoch = vi.logits(&x, true, &PrngStream::new(4, 4)).unwrap();
        let mean = vi.logits(&x, false, &PrngStream::new(4, 4)).unwrap();
        assert_eq!(stoch, mean);
    }

    #[test]
    fn elbo_with_prior_posterior_has_no_kl() {
        let mut vi = build_dense_stack(
            2,
            &[],
            2,
            LearnerMode::Variational,
            &mut PrngStream::new(5, 0),
        )
        .unwrap();
        if let Layer::FlipoutDense(f) = &mut vi.layers[0] {
            f.weight.mu = f.weight.mu.map(|_| 0.0);
            f.weight.rho = f.weight.rho.map(|_| inverse_softplus(1.0));
            f.bias.rho = f.bias.rho.map(|_| inverse_softplus(1.0));
        }
        let x = toy_x();
        let labels = [0, 1, 1];
        let w = [1.0; 3];
        let batch = Batch {
            features: &x,
            labels: &labels,
            weights: &w,
        };
        let est = elbo_loss(&vi, &batch, 1, 1.0, &PrngStream::new(3, 0)).unwrap();
        assert!(est.kl.abs() < 1e-12);
        assert!((est.loss - est.nll).abs() < 1e-12);
    }

    #[test]
    fn elbo_uniform_head_likelihood() {
        // zero means and vanishing spread: logits are 0, both classes at 0.5
        let mut vi = build_dense_stack(
            1,
            &[],
            2,
            LearnerMode::Variational,
            &mut PrngStream::new(5, 0),
        )
        .unwrap();
        if let Layer::FlipoutDense(f) = &mut vi.layers[0] {
            f.weight.mu = f.weight.mu.map(|_| 0.0);
            f.weight.rho = f.weight.rho.map(|_| -800.0);
            f.bias.rho = f.bias.rho.map(|_| -800.0);
        }
        let x = Tensor::from_rows(&[vec![1.0]]).unwrap();
        let batch = Batch {
            features: &x,
            labels: &[1],
            weights: &[1.0],
        };
        let est = elbo_loss(&vi, &batch, 1, 0.0, &PrngStream::new(0, 0)).unwrap();
        assert!((est.nll - (-(0.5f64).ln())).abs() < 1e-15);
        assert!(matches!(
            elbo_loss(&vi, &batch, 0, 1.0, &PrngStream::new(0, 0)),
            Err(Error::InvalidParameter(_))
        ));
    }
}
