//! IDX and CSV ingestion, the two image contamination recipes, train/test
//! splits and content hashes.

mod contaminate;
mod csv;
mod idx;
mod split;

use sha2::{Digest, Sha256};

pub use self::csv::load_csv_labeled;
pub use contaminate::{
    contaminate_awgn, contaminate_superimpose, min_max, Contamination, Superimposed, AWGN_DEFAULT,
    SUPERIMPOSE_DEFAULT,
};
pub use idx::{
    idx_image_bytes, idx_label_bytes, load_idx, parse_idx_images, parse_idx_labels, write_idx,
    RawImageSet,
};
pub use split::{train_test_interface, SplitSpec};

pub use crate::boosting::Dataset;
use crate::numerics::Tensor;

/// Hex SHA-256 of a feature tensor and its labels.
pub fn content_hash(features: &Tensor, labels: &[usize]) -> String {
    let mut h = Sha256::new();
    h.update(features.to_le_bytes());
    for &y in labels {
        h.update((y as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Hex SHA-256 of raw bytes.
pub fn bytes_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Wraps contaminated features and their raw labels as a [`Dataset`].
pub fn to_dataset(features: Tensor, set: &RawImageSet, n_classes: usize) -> crate::Result<Dataset> {
    Dataset::new(features, set.labels_usize(), n_classes)
}
