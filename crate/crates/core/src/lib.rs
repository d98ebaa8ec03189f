//! Uncertainty-driven boosting of probabilistic neural classifiers.
//!
//! Each boosting level trains a probabilistic weak learner (Monte Carlo
//! dropout or a flipout variational network), scores every training sample
//! by the Monte Carlo variance of its predicted class probabilities, and
//! hands a reshaped training set to the next level: the least uncertain
//! samples are dropped ([`boosting::Variant::Undersampled`]), the most
//! uncertain are duplicated ([`boosting::Variant::Oversampled`]) or have
//! their loss weight bumped ([`boosting::Variant::Weighted`]). The levels are
//! combined by a weighted sum of their Monte Carlo mean probabilities.
//!
//! The crate also carries the evaluation side used to study the method:
//! macro one-vs-all metrics, AUC, relative obtainable improvement, run
//! summaries and a paired one-tailed t-test, plus IDX/CSV ingestion and the
//! two image contamination recipes.
//!
//! Monte Carlo loops run on rayon when the `parallel` feature (on by
//! default) is enabled; every stochastic draw comes from a
//! [`numerics::PrngStream`] keyed by its position, so results do not depend
//! on scheduling.

pub mod boosting;
pub mod data;
pub mod ensemble;
mod error;
pub mod eval;
pub mod nn;
pub mod numerics;
pub mod parallel;
pub mod uncertainty;

pub use error::{Error, Result};
