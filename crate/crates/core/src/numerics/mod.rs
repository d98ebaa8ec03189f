//! Tensor storage, seeded random streams and ordering primitives.

mod prng;
mod tensor;

pub use prng::PrngStream;
pub use tensor::Tensor;

use crate::{Error, Result};

/// Draws i.i.d. `N(mean, std^2)` values of the given shape from `stream`.
pub fn gaussian_sample(
    stream: &mut PrngStream,
    mean: f64,
    std: f64,
    shape: &[usize],
) -> Result<Tensor> {
    if !(std >= 0.0) {
        return Err(Error::invalid(format!(
            "standard deviation must be >= 0, got {std}"
        )));
    }
    let n: usize = shape.iter().product();
    let data = if std == 0.0 {
        vec![mean; n]
    } else {
        (0..n)
            .map(|_| mean + std * stream.standard_normal())
            .collect()
    };
    Tensor::new(shape.to_vec(), data)
}

/// Uniform random permutation of `0..n` (Fisher–Yates driven by `stream`).
pub fn permutation(stream: &mut PrngStream, n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = stream.below(i as u64 + 1) as usize;
        out.swap(i, j);
    }
    out
}

/// Indices that sort `values` ascending. Equal values keep their original
/// relative order.
pub fn stable_argsort_ascending(values: &[f64]) -> Result<Vec<usize>> {
    if let Some(pos) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::invalid(format!(
            "NaN at position {pos} cannot be ordered"
        )));
    }
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // slice::sort_by is stable
    idx.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .expect("NaN excluded above")
    });
    Ok(idx)
}
