use crate::numerics::Tensor;
use crate::{Error, Result};

/// Row-wise softmax of a `[batch, classes]` matrix.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let k = out.row_len();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_targets(rows: usize, k: usize, labels: &[usize], weights: &[f64]) -> Result<()> {
    if labels.len() != rows || weights.len() != rows {
        return Err(Error::shape(format!(
            "{rows} rows but {} labels and {} weights",
            labels.len(),
            weights.len()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!("label {y} outside 0..{k}")));
    }
    Ok(())
}

/// `Σ wᵢ·(−log probs[i, yᵢ]) / Σ wᵢ`, with the gradient taken with respect
/// to the logits that produced `probs` through a softmax.
pub fn weighted_cross_entropy(
    probs: &Tensor,
    labels: &[usize],
    weights: &[f64],
) -> Result<(f64, Tensor)> {
    let (m, k) = (probs.rows(), probs.row_len());
    check_targets(m, k, labels, weights)?;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("sample weights sum to zero"));
    }
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for i in 0..m {
        let p = probs.row(i)[labels[i]].max(f64::MIN_POSITIVE);
        loss -= weights[i] * p.ln();
        let g = grad.row_mut(i);
        g[labels[i]] -= 1.0;
        for v in g.iter_mut() {
            *v *= weights[i] / total;
        }
    }
    Ok((loss / total, grad))
}

/// Weighted negative log-likelihood straight from logits (log-sum-exp form).
/// With `normalize` the result is divided by `Σ w`, otherwise it is the plain
/// weighted sum. Returns the loss and its gradient with respect to the logits.
pub(crate) fn weighted_nll_from_logits(
    logits: &Tensor,
    labels: &[usize],
    weights: &[f64],
    normalize: bool,
) -> Result<(f64, Tensor)> {
    let (m, k) = (logits.rows(), logits.row_len());
    check_targets(m, k, labels, weights)?;
    let total: f64 = weights.iter().sum();
    if normalize && !(total > 0.0) {
        return Err(Error::invalid("sample weights sum to zero"));
    }
    let scale = if normalize { 1.0 / total } else { 1.0 };
    let probs = softmax_rows(logits);
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for i in 0..m {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += weights[i] * (lse - row[labels[i]]);
        let g = grad.row_mut(i);
        g[labels[i]] -= 1.0;
        for v in g.iter_mut() {
            *v *= weights[i] * scale;
        }
    }
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn probs(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn uniform_weights_give_mean_ce() {
        let p = probs(&[vec![0.5, 0.5], vec![0.25, 0.75]]);
        let (l, _) = weighted_cross_entropy(&p, &[0, 1], &[1.0, 1.0]).unwrap();
        assert!((l - (LN_2 - 0.75f64.ln()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn hand_weighted_case() {
        // losses ln2 and 2ln2 with weights 1 and 3 -> 7ln2/4
        let p = probs(&[vec![0.5, 0.5], vec![0.75, 0.25]]);
        let (l, _) = weighted_cross_entropy(&p, &[0, 1], &[1.0, 3.0]).unwrap();
        assert!((l - 1.75 * LN_2).abs() < 1e-15);
        let (l2, _) = weighted_cross_entropy(&p, &[0, 1], &[2.0, 6.0]).unwrap();
        assert!((l - l2).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_rejected() {
        let p = probs(&[vec![0.5, 0.5]]);
        assert!(matches!(
            weighted_cross_entropy(&p, &[0], &[0.0]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn logits_route_agrees_with_probs_route() {
        let z = probs(&[vec![0.3, -1.0, 2.0], vec![1.0, 1.0, -0.5]]);
        let (a, ga) = weighted_cross_entropy(&softmax_rows(&z), &[2, 0], &[1.0, 2.0]).unwrap();
        let (b, gb) = weighted_nll_from_logits(&z, &[2, 0], &[1.0, 2.0], true).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(ga.max_abs_diff(&gb) < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax_rows(&probs(&[vec![1000.0, -1000.0, 3.0], vec![0.0, 0.0, 0.0]]));
        for i in 0..2 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
