//! Monte Carlo predictive distributions and per-sample epistemic variance.

use serde::{Deserialize, Serialize};

use crate::nn::{LearnerMode, WeakLearner};
use crate::numerics::{PrngStream, Tensor};
use crate::parallel::map_range;
use crate::{Error, Result};

/// Number of stochastic forward passes `T` and whether to keep them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub mc_samples: usize,
    #[serde(default = "default_keep")]
    pub keep_samples: bool,
}

fn default_keep() -> bool {
    true
}

impl UncertaintyConfig {
    pub fn new(mc_samples: usize) -> Self {
        UncertaintyConfig {
            mc_samples,
            keep_samples: true,
        }
    }

    /// 50 draws for variational learners.
    pub fn for_vi() -> Self {
        Self::new(50)
    }

    /// 200 draws for dropout learners.
    pub fn for_mcd() -> Self {
        Self::new(200)
    }

    pub fn for_mode(mode: LearnerMode) -> Self {
        match mode {
            LearnerMode::Variational => Self::for_vi(),
            LearnerMode::McDropout { .. } => Self::for_mcd(),
            LearnerMode::Deterministic => Self::new(1),
        }
    }
}

/// MC mean class probabilities, `[batch, K]`, optionally with the raw
/// samples as `[T, batch, K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    pub mean_probs: Tensor,
    pub raw_samples: Option<Tensor>,
}

impl PredictiveDistribution {
    /// Builds the distribution from per-draw `[batch, K]` matrices.
    pub fn from_samples(samples: &[Tensor]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("at least one sample is required"))?;
        let shape = first.shape().to_vec();
        if shape.len() != 2 || samples.iter().any(|s| s.shape() != shape.as_slice()) {
            return Err(Error::shape("samples must share one [batch, K] shape"));
        }
        let mut mean = vec![0.0; first.len()];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s.data()) {
                *m += v;
            }
        }
        let inv = 1.0 / samples.len() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        let mut raw = Vec::with_capacity(first.len() * samples.len());
        for s in samples {
            raw.extend_from_slice(s.data());
        }
        Ok(PredictiveDistribution {
            mean_probs: Tensor::new(shape.clone(), mean)?,
            raw_samples: Some(Tensor::new(vec![samples.len(), shape[0], shape[1]], raw)?),
        })
    }

    pub fn n_samples(&self) -> Option<usize> {
        self.raw_samples.as_ref().map(|r| r.shape()[0])
    }
}

/// Per-sample epistemic variance `u`, aligned with the scored rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScores {
    pub u: Vec<f64>,
}

impl UncertaintyScores {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Runs `T` stochastic forward passes; pass `t` draws from `stream.fork(t)`,
/// so the result does not depend on how the passes are scheduled.
pub fn mc_predict(
    learner: &WeakLearner,
    x: &Tensor,
    cfg: &UncertaintyConfig,
    stream: &PrngStream,
) -> Result<PredictiveDistribution> {
    if cfg.mc_samples < 1 {
        return Err(Error::invalid(
            "at least one Monte Carlo sample is required",
        ));
    }
    if learner.mode() == LearnerMode::Deterministic && cfg.mc_samples > 1 {
        log::warn!(
            "deterministic learner sampled {} times; all samples are equal",
            cfg.mc_samples
        );
    }
    let stochastic = learner.mode().is_probabilistic();
    let samples = map_range(cfg.mc_samples, |t| {
        learner.forward(x, stochastic, &stream.fork(t as u64))
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let mut dist = PredictiveDistribution::from_samples(&samples)?;
    if !cfg.keep_samples {
        dist.raw_samples = None;
    }
    Ok(dist)
}

/// `u[i] = Σ_y (1/T) Σ_t (P_t(y|x_i) − P̄(y|x_i))²`, with `u[i] = 0` exactly
/// when all `T` rows for sample `i` coincide.
pub fn epistemic_variance(dist: &PredictiveDistribution) -> Result<UncertaintyScores> {
    let raw = dist.raw_samples.as_ref().ok_or(Error::MissingSamples)?;
    let (t, n, k) = match *raw.shape() {
        [t, n, k] => (t, n, k),
        _ => return Err(Error::shape("raw samples must be [T, batch, K]")),
    };
    let data = raw.data();
    let row = |s: usize, i: usize| &data[(s * n + i) * k..(s * n + i + 1) * k];
    let u = (0..n)
        .map(|i| {
            if (1..t).all(|s| row(s, i) == row(0, i)) {
                return 0.0;
            }
            let mut total = 0.0;
            for y in 0..k {
                let mean = (0..t).map(|s| row(s, i)[y]).sum::<f64>() / t as f64;
                total += (0..t).map(|s| (row(s, i)[y] - mean).powi(2)).sum::<f64>() / t as f64;
            }
            total
        })
        .collect();
    Ok(UncertaintyScores { u })
}
