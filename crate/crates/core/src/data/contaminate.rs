use serde::{Deserialize, Serialize};

use super::RawImageSet;
use crate::numerics::{permutation, PrngStream, Tensor};
use crate::parallel::map_range;
use crate::{Error, Result};

/// Default AWGN mean and variance: half the 8-bit range.
pub const AWGN_DEFAULT: f64 = 255.0 / 2.0;
/// Default share of images that receive a donor digit.
pub const SUPERIMPOSE_DEFAULT: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Contamination {
    Awgn {
        #[serde(default = "awgn_default")]
        mean: f64,
        /// Variance, not standard deviation.
        #[serde(default = "awgn_default")]
        variance: f64,
    },
    Superimpose {
        #[serde(default = "superimpose_default")]
        fraction: f64,
    },
}

fn awgn_default() -> f64 {
    AWGN_DEFAULT
}

fn superimpose_default() -> f64 {
    SUPERIMPOSE_DEFAULT
}

impl Contamination {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Contamination::Awgn { mean, variance } => {
                if !mean.is_finite() || !(variance >= 0.0) || !variance.is_finite() {
                    return Err(Error::invalid(
                        "AWGN needs a finite mean and a non-negative variance",
                    ));
                }
            }
            Contamination::Superimpose { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::invalid(format!(
                        "superimpose fraction must lie in (0, 1], got {fraction}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Adds `N(mean, variance)` noise to every pixel, clips to `[0, 255]` and
/// scales to `[0, 1]`. Image `i` draws from `stream.fork(i)`. Output is
/// `[n, rows·cols]`.
pub fn contaminate_awgn(
    set: &RawImageSet,
    mean: f64,
    variance: f64,
    stream: &PrngStream,
) -> Result<Tensor> {
    Contamination::Awgn { mean, variance }.validate()?;
    let std = variance.sqrt();
    let images = map_range(set.len(), |i| {
        let mut s = stream.fork(i as u64);
        set.image(i)
            .iter()
            .map(|&p| {
                let noisy = p as f64 + mean + std * s.standard_normal();
                noisy.clamp(0.0, 255.0) / 255.0
            })
            .collect::<Vec<f64>>()
    });
    Tensor::new(vec![set.len(), set.image_len()], images.concat())
}

/// Per-image min–max scaling to `[0, 1]`; a constant image becomes zeros.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Contaminated features and which donor each chosen base image received.
#[derive(Clone, Debug, PartialEq)]
pub struct Superimposed {
    pub features: Tensor,
    /// `(base index, donor index)` pairs, in base order.
    pub pairs: Vec<(usize, usize)>,
}

/// Adds a random same-class donor image to `floor(fraction·n)` randomly
/// chosen base images, then min–max scales every image on its own.
pub fn contaminate_superimpose(
    base: &RawImageSet,
    donor: &RawImageSet,
    fraction: f64,
    stream: &PrngStream,
) -> Result<Superimposed> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "superimpose fraction must lie in [0, 1], got {fraction}"
        )));
    }
    if base.image_len() != donor.image_len() {
        return Err(Error::shape("base and donor images differ in size"));
    }
    let k = base.n_classes().max(donor.n_classes());
    let mut donors_by_class = vec![Vec::new(); k];
    for (i, &l) in donor.labels.iter().enumerate() {
        donors_by_class[l as usize].push(i);
    }
    if let Some(&missing) = base
        .labels
        .iter()
        .find(|&&l| donors_by_class[l as usize].is_empty())
    {
        return Err(Error::data(format!(
            "donor set has no image of class {missing}"
        )));
    }
    let n_sel = (fraction * base.len() as f64).floor() as usize;
    let mut chosen = permutation(&mut stream.fork(0), base.len())[..n_sel].to_vec();
    chosen.sort_unstable();
    let mut pick = stream.fork(1);
    let pairs: Vec<(usize, usize)> = chosen
        .iter()
        .map(|&b| {
            let pool = &donors_by_class[base.labels[b] as usize];
            (b, pool[pick.below(pool.len() as u64) as usize])
        })
        .collect();
    let mut partner = vec![None; base.len()];
    for &(b, d) in &pairs {
        partner[b] = Some(d);
    }
    let images = map_range(base.len(), |i| {
        let img: Vec<f64> = match partner[i] {
            Some(d) => base
                .image(i)
                .iter()
                .zip(donor.image(d))
                .map(|(&a, &b)| a as f64 + b as f64)
                .collect(),
            None => base.image(i).iter().map(|&a| a as f64).collect(),
        };
        min_max(&img)
    });
    Ok(Superimposed {
        features: Tensor::new(vec![base.len(), base.image_len()], images.concat())?,
        pairs,
    })
}
