use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::learner::{elbo_loss, Batch, LearnerMode, WeakLearner};
use crate::numerics::{permutation, PrngStream, Tensor};
use crate::{Error, Result};

/// Optimisation settings for one weak learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    /// Weight draws per mini-batch for variational learners.
    pub elbo_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            max_epochs: 300,
            patience: 10,
            validation_fraction: 0.30,
            learning_rate: 1e-3,
            elbo_samples: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.elbo_samples == 0 {
            return Err(Error::invalid(
                "batch size, epochs and ELBO samples must be positive",
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Outcome of feeding one validation loss to [`EarlyStopping`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience counter over validation losses; strict improvement resets it.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            waited: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.waited = 0;
            return StopDecision::Improved;
        }
        self.waited += 1;
        if self.waited >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Per-epoch losses of one training run. Epochs are numbered from 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn epochs_run(&self) -> usize {
        self.val_loss.len()
    }
}

/// Splits sample indices per class into `(train, validation)`.
///
/// Each class keeps at least one training sample and contributes
/// `round(fraction · n_c)` validation samples otherwise.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    fraction: f64,
    stream: &mut PrngStream,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::data(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        by_class[y].push(i);
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for members in &by_class {
        if members.is_empty() {
            continue;
        }
        let order = permutation(stream, members.len());
        let n_val = ((fraction * members.len() as f64).round() as usize).min(members.len() - 1);
        for (pos, &k) in order.iter().enumerate() {
            if pos < n_val {
                val.push(members[k]);
            } else {
                train.push(members[k]);
            }
        }
    }
    if val.is_empty() {
        return Err(Error::data("validation split is empty"));
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Fits `learner` in place with Adam and early stopping, then restores the
/// weights of the best validation epoch.
///
/// Validation loss is the weighted mean negative log-likelihood of the
/// deterministic forward pass for every learner mode. Sub-streams of
/// `stream`: `0` validation split, `[1, epoch]` shuffling, `[2, epoch, batch]`
/// forward noise.
pub fn train(
    learner: &mut WeakLearner,
    features: &Tensor,
    labels: &[usize],
    weights: &[f64],
    config: &TrainConfig,
    stream: &PrngStream,
) -> Result<History> {
    config.validate()?;
    let n = features.rows();
    if labels.len() != n || weights.len() != n {
        return Err(Error::shape(format!(
            "{n} samples but {} labels and {} weights",
            labels.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid(
            "sample weights must be finite and non-negative",
        ));
    }
    let (train_idx, val_idx) = stratified_split(
        labels,
        learner.n_classes(),
        config.validation_fraction,
        &mut stream.fork(0),
    )?;
    let val_x = features.select_rows(&val_idx)?;
    let val_y: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();
    let val_w: Vec<f64> = val_idx.iter().map(|&i| weights[i]).collect();
    let val_batch = Batch {
        features: &val_x,
        labels: &val_y,
        weights: &val_w,
    };

    let batches_per_epoch = train_idx.len().div_ceil(config.batch_size);
    let kl_scale = 1.0 / batches_per_epoch as f64;
    let mut adam = AdamState::new(&learner.params());
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params: Vec<Tensor> = learner.params().into_iter().cloned().collect();
    let mut history = History::default();

    for epoch in 1..=config.max_epochs {
        let order = permutation(&mut stream.fork_path(&[1, epoch as u64]), train_idx.len());
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let idx: Vec<usize> = chunk.iter().map(|&k| train_idx[k]).collect();
            let bw: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
            if bw.iter().sum::<f64>() == 0.0 {
                continue;
            }
            let bx = features.select_rows(&idx)?;
            let by: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let batch = Batch {
                features: &bx,
                labels: &by,
                weights: &bw,
            };
            let noise = stream.fork_path(&[2, epoch as u64, b as u64]);
            let (loss, grads) = match learner.mode() {
                LearnerMode::Variational => {
                    let est = elbo_loss(learner, &batch, config.elbo_samples, kl_scale, &noise)?;
                    (est.loss, est.grads)
                }
                _ => {
                    let eval = learner.cross_entropy_loss(&batch, &noise)?;
                    (eval.loss, eval.grads)
                }
            };
            if !loss.is_finite() {
                return Err(Error::invalid(format!(
                    "training loss diverged in epoch {epoch}"
                )));
            }
            epoch_loss += loss;
            adam_step(
                &mut adam,
                &mut learner.params_mut(),
                &grads,
                config.learning_rate,
            );
        }
        let val_loss = learner.validation_loss(&val_batch)?;
        history
            .train_loss
            .push(epoch_loss / batches_per_epoch as f64);
        history.val_loss.push(val_loss);
        log::debug!(
            "epoch {epoch}: train {:.5} val {val_loss:.5}",
            epoch_loss / batches_per_epoch as f64
        );
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best_params = learner.params().into_iter().cloned().collect(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    for (p, best) in learner.params_mut().into_iter().zip(best_params) {
        *p = best;
    }
    history.best_epoch = stopper.best_epoch().unwrap_or(0);
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_dense_stack;

    fn blobs(n_per: usize, stream: &mut PrngStream) -> (Tensor, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            let centre = if c == 0 { -2.0 } else { 2.0 };
            for _ in 0..n_per {
                rows.push(vec![
                    centre + 0.5 * stream.standard_normal(),
                    0.5 * stream.standard_normal(),
                ]);
                labels.push(c);
            }
        }
        (Tensor::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn patience_one_stops_after_first_worse_epoch() {
        let mut es = EarlyStopping::new(1);
        assert_eq!(es.observe(1, 0.5), StopDecision::Improved);
        assert_eq!(es.observe(2, 0.6), StopDecision::Stop);
        assert_eq!(es.best_epoch(), Some(1));
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        let mut es = EarlyStopping::new(2);
        es.observe(1, 1.0);
        assert_eq!(es.observe(2, 1.0), StopDecision::Continue);
        assert_eq!(es.observe(3, 0.9), StopDecision::Improved);
        assert_eq!(es.best_epoch(), Some(3));
    }

    #[test]
    fn split_keeps_every_class_in_training() {
        let labels = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 2];
        let (train, val) = stratified_split(&labels, 3, 0.3, &mut PrngStream::new(1, 0)).unwrap();
        assert_eq!(val.len(), 3);
        assert_eq!(train.len(), 9);
        assert!(val.iter().all(|&i| labels[i] == 0));
        assert!(stratified_split(&[0, 1], 2, 0.3, &mut PrngStream::new(1, 0)).is_err());
    }

    #[test]
    fn learns_separable_blobs_and_restores_best_epoch() {
        let mut s = PrngStream::new(11, 0);
        let (x, y) = blobs(60, &mut s);
        let w = vec![1.0; y.len()];
        let cfg = TrainConfig {
            max_epochs: 40,
            patience: 5,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        for mode in [
            LearnerMode::Deterministic,
            LearnerMode::mcd(),
            LearnerMode::Variational,
        ] {
            let mut net = build_dense_stack(2, &[8], 2, mode, &mut PrngStream::new(1, 0)).unwrap();
            let hist = train(&mut net, &x, &y, &w, &cfg, &PrngStream::new(2, 0)).unwrap();
            assert!(hist.best_epoch >= 1);
            let best = hist.val_loss[hist.best_epoch - 1];
            assert!(hist.val_loss.iter().all(|&v| v >= best));
            let probs = net.predict_proba(&x).unwrap();
            let correct = (0..y.len())
                .filter(|&i| (probs.row(i)[1] > 0.5) == (y[i] == 1))
                .count();
            assert!(
                correct as f64 / y.len() as f64 > 0.95,
                "{mode:?}: {correct}"
            );
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let mut s = PrngStream::new(4, 0);
        let (x, y) = blobs(20, &mut s);
        let w = vec![1.0; y.len()];
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let run = || {
            let mut net = build_dense_stack(
                2,
                &[4],
                2,
                LearnerMode::Variational,
                &mut PrngStream::new(1, 0),
            )
            .unwrap();
            train(&mut net, &x, &y, &w, &cfg, &PrngStream::new(9, 0)).unwrap();
            net
        };
        assert_eq!(run(), run());
    }
}
