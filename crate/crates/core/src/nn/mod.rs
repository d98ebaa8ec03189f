//! Weak learners: layer kernels, flipout, losses, Adam and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod flipout;
pub mod layers;
mod learner;
mod linalg;
pub mod loss;
mod train;

pub use learner::{
    build_dense_stack, build_lenet_variant, elbo_loss, Batch, ElboEstimate, LearnerMode, LossEval,
    WeakLearner, DEFAULT_DROPOUT, POSTERIOR_INIT_STD, PRIOR_STD,
};
pub use train::{stratified_split, train, EarlyStopping, History, StopDecision, TrainConfig};
