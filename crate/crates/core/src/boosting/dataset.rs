use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;
use crate::{Error, Result};

/// Features, integer labels and per-sample loss weights.
///
/// `origin[i]` is the row index the sample had in the dataset it was first
/// built from, so duplicates and reshuffled samples stay traceable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    weights: Vec<f64>,
    origin: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    /// Unit weights, identity origins.
    pub fn new(features: Tensor, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let n = labels.len();
        Self::from_parts(features, labels, vec![1.0; n], (0..n).collect(), n_classes)
    }

    pub fn from_parts(
        features: Tensor,
        labels: Vec<usize>,
        weights: Vec<f64>,
        origin: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n || weights.len() != n || origin.len() != n {
            return Err(Error::shape(format!(
                "{n} feature rows, {} labels, {} weights, {} origins",
                labels.len(),
                weights.len(),
                origin.len()
            )));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::data(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 1.0)) {
            return Err(Error::invalid(
                "sample weights must be finite and at least 1",
            ));
        }
        Ok(Dataset {
            features,
            labels,
            weights,
            origin,
            n_classes,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `idx`, in that order, carrying weights and origins along.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            features: self.features.select_rows(idx)?,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
            origin: idx.iter().map(|&i| self.origin[i]).collect(),
            n_classes: self.n_classes,
        })
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }
}
