use super::Dataset;
use crate::numerics::{permutation, stable_argsort_ascending, PrngStream};
use crate::uncertainty::UncertaintyScores;
use crate::{Error, Result};

/// Per-level retention factor `R = τ^(1/(V−1))`.
pub fn reduction_factor(tau: f64, levels: usize) -> Result<f64> {
    if levels < 2 {
        return Err(Error::invalid(
            "a reduction factor needs at least two levels",
        ));
    }
    check_tau(tau)?;
    Ok(tau.powf(1.0 / (levels - 1) as f64))
}

/// `1 / (1 − R)`: undersampling drops `floor(len / divValue)` samples.
pub fn div_value(tau: f64, levels: usize) -> Result<f64> {
    Ok(1.0 / (1.0 - reduction_factor(tau, levels)?))
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("tau must lie in (0, 1), got {tau}")))
    }
}

fn check_scores(d: &Dataset, u: &UncertaintyScores) -> Result<()> {
    if u.len() != d.len() {
        return Err(Error::shape(format!(
            "{} scores for {} samples",
            u.len(),
            d.len()
        )));
    }
    Ok(())
}

/// First sorted position of the top-uncertainty block: `floor(len·(1−τ))`.
pub fn top_start(len: usize, tau: f64) -> usize {
    (len as f64 * (1.0 - tau)).floor() as usize
}

/// Indices into `d` of the samples with the highest uncertainty, in ascending
/// uncertainty order (stable on ties).
pub fn top_set(u: &UncertaintyScores, tau: f64) -> Result<Vec<usize>> {
    check_tau(tau)?;
    let order = stable_argsort_ascending(&u.u)?;
    Ok(order[top_start(order.len(), tau)..].to_vec())
}

/// Drops the `floor(len / divValue)` least uncertain samples and shuffles
/// the rest.
pub fn undersample_step(
    d: &Dataset,
    u: &UncertaintyScores,
    div_value: f64,
    stream: &mut PrngStream,
) -> Result<Dataset> {
    check_scores(d, u)?;
    if !(div_value > 1.0) {
        return Err(Error::invalid(format!(
            "divValue must exceed 1, got {div_value}"
        )));
    }
    let order = stable_argsort_ascending(&u.u)?;
    let drop = (d.len() as f64 / div_value).floor() as usize;
    let kept = &order[drop..];
    if kept.is_empty() {
        return Err(Error::data("undersampling removed every sample"));
    }
    let shuffle = permutation(stream, kept.len());
    let idx: Vec<usize> = shuffle.iter().map(|&p| kept[p]).collect();
    d.select(&idx)
}

/// Appends a copy of the top-uncertainty block and shuffles the union.
pub fn oversample_step(
    d: &Dataset,
    u: &UncertaintyScores,
    tau: f64,
    stream: &mut PrngStream,
) -> Result<Dataset> {
    check_scores(d, u)?;
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.extend(top_set(u, tau)?);
    let shuffle = permutation(stream, idx.len());
    let idx: Vec<usize> = shuffle.iter().map(|&p| idx[p]).collect();
    d.select(&idx)
}

/// Adds one to the loss weight of the top-uncertainty block, then shuffles
/// samples and weights together.
pub fn weight_step(
    d: &Dataset,
    u: &UncertaintyScores,
    tau: f64,
    stream: &mut PrngStream,
) -> Result<Dataset> {
    check_scores(d, u)?;
    let mut bumped = d.clone();
    for i in top_set(u, tau)? {
        bumped.weights_mut()[i] += 1.0;
    }
    let shuffle = permutation(stream, d.len());
    bumped.select(&shuffle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn toy(n: usize) -> Dataset {
        let x = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        Dataset::new(x, (0..n).map(|i| i % 2).collect(), 2).unwrap()
    }

    fn scores(v: Vec<f64>) -> UncertaintyScores {
        UncertaintyScores { u: v }
    }

    #[test]
    fn reduction_factor_examples() {
        assert!((reduction_factor(0.25, 4).unwrap() - 0.63).abs() < 0.005);
        assert_eq!(reduction_factor(0.25, 2).unwrap(), 0.25);
        assert!((reduction_factor(0.5, 3).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(reduction_factor(0.25, 1).is_err());
    }

    #[test]
    fn undersample_halves_twice() {
        let dv = div_value(0.25, 3).unwrap();
        assert!((dv - 2.0).abs() < 1e-12);
        let mut s = PrngStream::new(1, 0);
        let d = toy(8);
        let d1 = undersample_step(&d, &scores(vec![0.0; 8]), dv, &mut s).unwrap();
        assert_eq!(d1.len(), 4);
        let mut kept: Vec<usize> = d1.origin().to_vec();
        kept.sort();
        assert_eq!(kept, vec![4, 5, 6, 7]);
        let d2 = undersample_step(&d1, &scores(vec![0.0; 4]), dv, &mut s).unwrap();
        assert_eq!(d2.len(), 2);
        assert_eq!(
            undersample_step(&d, &scores(vec![0.0; 8]), f64::INFINITY, &mut s)
                .unwrap()
                .len(),
            8
        );
    }

    #[test]
    fn oversample_duplicates_top_two() {
        let d = toy(8);
        let u = scores((0..8).map(|i| i as f64 / 10.0).collect());
        let out = oversample_step(&d, &u, 0.25, &mut PrngStream::new(2, 0)).unwrap();
        assert_eq!(out.len(), 10);
        let mut origins = out.origin().to_vec();
        origins.sort();
        assert_eq!(origins, vec![0, 1, 2, 3, 4, 5, 6, 6, 7, 7]);
    }

    #[test]
    fn weighting_bumps_two_and_accumulates() {
        let d = toy(8);
        let u = scores(vec![0.5, 0.1, 0.9, 0.2, 0.3, 0.8, 0.0, 0.4]);
        let mut s = PrngStream::new(3, 0);
        let once = weight_step(&d, &u, 0.25, &mut s).unwrap();
        assert_eq!(once.weights().iter().filter(|&&w| w == 2.0).count(), 2);
        for (o, w) in once.origin().iter().zip(once.weights()) {
            assert_eq!(*w, if *o == 2 || *o == 5 { 2.0 } else { 1.0 });
        }
        let again_u = scores(once.origin().iter().map(|&o| u.u[o]).collect());
        let twice = weight_step(&once, &again_u, 0.25, &mut s).unwrap();
        assert_eq!(twice.weights().iter().filter(|&&w| w == 3.0).count(), 2);
        assert_eq!(twice.total_weight(), 12.0);
    }
}
