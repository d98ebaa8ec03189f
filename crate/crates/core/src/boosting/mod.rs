//! Level scheduling and the three training-set transforms.

mod dataset;
mod model;
mod transforms;

pub use dataset::Dataset;
pub use model::{run_proboost, BoostConfig, BoostedModel, LevelRecord, Variant};
pub use transforms::{
    div_value, oversample_step, reduction_factor, top_set, top_start, undersample_step, weight_step,
};
