//! Weighted-sum combination of the level learners.

use serde::{Deserialize, Serialize};

use crate::boosting::{BoostedModel, Dataset};
use crate::eval::accuracy;
use crate::numerics::{PrngStream, Tensor};
use crate::parallel::map_range;
use crate::uncertainty::{mc_predict, UncertaintyConfig};
use crate::{Error, Result};

/// Default number of random weight vectors tried by [`vwo_search`].
pub const VWO_CANDIDATES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// 1 for the first level, 0.5 for the rest.
    Fw,
    /// Each learner's accuracy on the original training set.
    Vw,
    /// Best of random weight vectors scored on the test set. Uses test labels,
    /// so it is an upper reference rather than a deployable model.
    Vwo,
}

impl WeightScheme {
    pub fn short_name(&self) -> &'static str {
        match self {
            WeightScheme::Fw => "fw",
            WeightScheme::Vw => "vw",
            WeightScheme::Vwo => "vwo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub psi: Vec<f64>,
    pub scheme: WeightScheme,
}

impl EnsembleWeights {
    pub fn new(psi: Vec<f64>, scheme: WeightScheme) -> Result<Self> {
        if psi.is_empty() || psi.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "ensemble weights must be finite, non-negative and non-empty",
            ));
        }
        if !psi.iter().any(|&w| w > 0.0) {
            return Err(Error::invalid(
                "at least one ensemble weight must be positive",
            ));
        }
        Ok(EnsembleWeights { psi, scheme })
    }
}

pub fn fw_weights(levels: usize) -> Result<EnsembleWeights> {
    if levels == 0 {
        return Err(Error::invalid("at least one level is required"));
    }
    let psi = (0..levels)
        .map(|v| if v == 0 { 1.0 } else { 0.5 })
        .collect();
    EnsembleWeights::new(psi, WeightScheme::Fw)
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(scores: &Tensor) -> Vec<usize> {
    (0..scores.rows())
        .map(|i| {
            let row = scores.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// `Σ_v ψ_v P_v`, accumulated in level order.
pub fn combine(probs: &[Tensor], psi: &[f64]) -> Result<Tensor> {
    if probs.is_empty() || probs.len() != psi.len() {
        return Err(Error::shape(format!(
            "{} learners but {} weights",
            probs.len(),
            psi.len()
        )));
    }
    let shape = probs[0].shape();
    if probs.iter().any(|p| p.shape() != shape) {
        return Err(Error::shape("learner outputs differ in shape"));
    }
    let mut acc = vec![0.0; probs[0].len()];
    for (p, &w) in probs.iter().zip(psi) {
        for (a, v) in acc.iter_mut().zip(p.data()) {
            *a += w * v;
        }
    }
    Tensor::new(shape.to_vec(), acc)
}

/// Labels and scores of the weighted sum rule.
pub fn predict_from_probs(probs: &[Tensor], psi: &[f64]) -> Result<(Vec<usize>, Tensor)> {
    let scores = combine(probs, psi)?;
    Ok((argmax_rows(&scores), scores))
}

/// MC-mean probabilities of every learner on `x`; learner `v` samples from
/// `stream.fork(v)`.
pub fn level_probabilities(
    model: &BoostedModel,
    x: &Tensor,
    cfg: Option<&UncertaintyConfig>,
    stream: &PrngStream,
) -> Result<Vec<Tensor>> {
    model
        .learners
        .iter()
        .enumerate()
        .map(|(v, learner)| {
            let ucfg = UncertaintyConfig {
                keep_samples: false,
                ..cfg
                    .cloned()
                    .unwrap_or_else(|| UncertaintyConfig::for_mode(learner.mode()))
            };
            Ok(mc_predict(learner, x, &ucfg, &stream.fork(v as u64))?.mean_probs)
        })
        .collect()
}

/// Each learner's argmax accuracy, from precomputed MC means.
pub fn vw_from_probs(probs: &[Tensor], labels: &[usize]) -> Result<EnsembleWeights> {
    let psi = probs
        .iter()
        .map(|p| accuracy(labels, &argmax_rows(p)))
        .collect::<Result<Vec<_>>>()?;
    if psi.iter().all(|&a| a == 0.0) {
        return Err(Error::data("every learner has zero training accuracy"));
    }
    EnsembleWeights::new(psi, WeightScheme::Vw)
}

/// Per-learner MC-mean accuracy over the full original training set.
pub fn vw_weights(
    model: &BoostedModel,
    full_train: &Dataset,
    cfg: Option<&UncertaintyConfig>,
    stream: &PrngStream,
) -> Result<EnsembleWeights> {
    let probs = level_probabilities(model, full_train.features(), cfg, stream)?;
    vw_from_probs(&probs, full_train.labels())
}

/// Outcome of the random weight search, with every candidate kept for
/// re-scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VwoSearch {
    pub weights: EnsembleWeights,
    pub accuracy: f64,
    pub best_index: usize,
    pub candidates: Vec<Vec<f64>>,
    pub accuracies: Vec<f64>,
}

/// Draws `n_candidates` vectors uniform on `[0,1]^V` and keeps the first one
/// reaching the highest test accuracy.
pub fn vwo_from_probs(
    probs: &[Tensor],
    labels: &[usize],
    n_candidates: usize,
    stream: &mut PrngStream,
) -> Result<VwoSearch> {
    if n_candidates == 0 {
        return Err(Error::invalid("at least one candidate is required"));
    }
    if labels.is_empty() {
        return Err(Error::data("test set is empty"));
    }
    let v = probs.len();
    let candidates: Vec<Vec<f64>> = (0..n_candidates)
        .map(|_| (0..v).map(|_| stream.uniform()).collect())
        .collect();
    let accuracies = map_range(n_candidates, |i| {
        let scores = combine(probs, &candidates[i])?;
        accuracy(labels, &argmax_rows(&scores))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, &a) in accuracies.iter().enumerate() {
        if a > accuracies[best] {
            best = i;
        }
    }
    let mut psi = candidates[best].clone();
    if psi.iter().all(|&w| w == 0.0) {
        // only reachable with an all-zero draw; any positive scale is equivalent
        psi.iter_mut().for_each(|w| *w = f64::MIN_POSITIVE);
    }
    Ok(VwoSearch {
        weights: EnsembleWeights::new(psi, WeightScheme::Vwo)?,
        accuracy: accuracies[best],
        best_index: best,
        candidates,
        accuracies,
    })
}

pub fn vwo_search(
    model: &BoostedModel,
    test: &Dataset,
    n_candidates: usize,
    cfg: Option<&UncertaintyConfig>,
    stream: &PrngStream,
) -> Result<VwoSearch> {
    let probs = level_probabilities(model, test.features(), cfg, &stream.fork(0))?;
    vwo_from_probs(&probs, test.labels(), n_candidates, &mut stream.fork(1))
}

/// Boosted learners plus their combination weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleModel {
    pub boosted: BoostedModel,
    pub weights: EnsembleWeights,
    pub uncertainty: Option<UncertaintyConfig>,
}

impl EnsembleModel {
    pub fn new(
        boosted: BoostedModel,
        weights: EnsembleWeights,
        uncertainty: Option<UncertaintyConfig>,
    ) -> Result<Self> {
        if weights.psi.len() != boosted.learners.len() {
            return Err(Error::shape(format!(
                "{} weights for {} learners",
                weights.psi.len(),
                boosted.learners.len()
            )));
        }
        Ok(EnsembleModel {
            boosted,
            weights,
            uncertainty,
        })
    }

    /// Labels and `Σ_v ψ_v P_v` scores.
    pub fn predict(&self, x: &Tensor, stream: &PrngStream) -> Result<(Vec<usize>, Tensor)> {
        let probs = level_probabilities(&self.boosted, x, self.uncertainty.as_ref(), stream)?;
        predict_from_probs(&probs, &self.weights.psi)
    }
}
