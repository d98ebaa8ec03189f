use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;
use crate::{Error, Result};

/// One-vs-all confusion counts for a single class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub counts: ConfusionCounts,
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
    pub ppv: f64,
    pub npv: f64,
    /// Names of ratios whose denominator was zero; they count as 0.
    pub undefined: Vec<String>,
}

/// Macro averages over classes. `auc` is filled in by [`auc_ova`] callers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub sen: f64,
    pub spe: f64,
    pub ppv: f64,
    pub npv: f64,
    pub auc: Option<f64>,
    /// Plain multiclass accuracy.
    pub micro_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl MetricsReport {
    /// Looks a macro metric up by its short name.
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "acc" => Some(self.acc),
            "sen" => Some(self.sen),
            "spe" => Some(self.spe),
            "ppv" => Some(self.ppv),
            "npv" => Some(self.npv),
            "auc" => self.auc,
            "micro_acc" => Some(self.micro_accuracy),
            _ => None,
        }
    }

    pub const METRIC_NAMES: [&'static str; 6] = ["acc", "sen", "spe", "ppv", "npv", "auc"];
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn check_labels(labels: &[usize], k: usize, what: &str) -> Result<()> {
    match labels.iter().find(|&&y| y >= k) {
        Some(y) => Err(Error::invalid(format!(
            "{what} label {y} out of range for {k} classes"
        ))),
        None => Ok(()),
    }
}

/// Fraction of positions where the two label lists agree.
pub fn accuracy(labels_true: &[usize], labels_pred: &[usize]) -> Result<f64> {
    if labels_true.len() != labels_pred.len() || labels_true.is_empty() {
        return Err(Error::shape("label lists must be non-empty and aligned"));
    }
    let hits = labels_true
        .iter()
        .zip(labels_pred)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / labels_true.len() as f64)
}

/// Per-class OvA Acc/Sen/Spe/PPV/NPV and their unweighted means.
pub fn macro_metrics(
    labels_true: &[usize],
    labels_pred: &[usize],
    k: usize,
) -> Result<MetricsReport> {
    if k < 2 {
        return Err(Error::invalid("at least two classes are required"));
    }
    let micro_accuracy = accuracy(labels_true, labels_pred)?;
    check_labels(labels_true, k, "true")?;
    check_labels(labels_pred, k, "predicted")?;
    let n = labels_true.len();
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let mut counts = ConfusionCounts::default();
        for (&t, &p) in labels_true.iter().zip(labels_pred) {
            match (t == c, p == c) {
                (true, true) => counts.tp += 1,
                (false, true) => counts.fp += 1,
                (false, false) => counts.tn += 1,
                (true, false) => counts.fn_ += 1,
            }
        }
        let mut undefined = Vec::new();
        let ConfusionCounts { tp, fp, tn, fn_ } = counts;
        per_class.push(ClassMetrics {
            class: c,
            counts,
            acc: (tp + tn) as f64 / n as f64,
            sen: ratio(tp, tp + fn_, "sen", &mut undefined),
            spe: ratio(tn, tn + fp, "spe", &mut undefined),
            ppv: ratio(tp, tp + fp, "ppv", &mut undefined),
            npv: ratio(tn, tn + fn_, "npv", &mut undefined),
            undefined,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    Ok(MetricsReport {
        acc: mean(|m| m.acc),
        sen: mean(|m| m.sen),
        spe: mean(|m| m.spe),
        ppv: mean(|m| m.ppv),
        npv: mean(|m| m.npv),
        auc: None,
        micro_accuracy,
        per_class,
    })
}

/// Macro OvA AUC and its per-class parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub value: f64,
    /// `None` for classes that were skipped.
    pub per_class: Vec<Option<f64>>,
    /// Classes without positives or without negatives in `labels_true`.
    pub skipped: Vec<usize>,
}

/// Rank-based (Mann–Whitney) AUC of each score column against the rest,
/// ties counted as one half, averaged over the classes that can be scored.
pub fn auc_ova(scores: &Tensor, labels_true: &[usize]) -> Result<AucReport> {
    let (n, k) = (scores.rows(), scores.row_len());
    if n != labels_true.len() || n == 0 {
        return Err(Error::shape(format!(
            "{n} score rows for {} labels",
            labels_true.len()
        )));
    }
    check_labels(labels_true, k, "true")?;
    if scores.data().iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let mut per_class = Vec::with_capacity(k);
    let mut skipped = Vec::new();
    for c in 0..k {
        let n_pos = labels_true.iter().filter(|&&y| y == c).count();
        let n_neg = n - n_pos;
        if n_pos == 0 || n_neg == 0 {
            skipped.push(c);
            per_class.push(None);
            continue;
        }
        let col: Vec<f64> = (0..n).map(|i| scores.row(i)[c]).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        // midranks over tie groups
        let mut rank_sum_pos = 0.0;
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && col[order[end]] == col[order[start]] {
                end += 1;
            }
            let mid = (start + end + 1) as f64 / 2.0;
            rank_sum_pos += mid
                * order[start..end]
                    .iter()
                    .filter(|&&i| labels_true[i] == c)
                    .count() as f64;
            start = end;
        }
        let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
        per_class.push(Some(u / (n_pos as f64 * n_neg as f64)));
    }
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::data(
            "no class has both positive and negative samples",
        ));
    }
    Ok(AucReport {
        value: scored.iter().sum::<f64>() / scored.len() as f64,
        per_class,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_six_sample_case() {
        let r = macro_metrics(&[0, 0, 1, 1, 2, 2], &[0, 1, 1, 1, 2, 0], 3).unwrap();
        let c0 = &r.per_class[0];
        assert_eq!(
            c0.counts,
            ConfusionCounts {
                tp: 1,
                fp: 1,
                tn: 3,
                fn_: 1
            }
        );
        assert_eq!((c0.sen, c0.spe, c0.ppv, c0.npv), (0.5, 0.75, 0.5, 0.75));
    }

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1, 0];
        let r = macro_metrics(&y, &y, 3).unwrap();
        assert_eq!(
            (r.acc, r.sen, r.spe, r.ppv, r.npv),
            (1.0, 1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn constant_predictor_flags_undefined_ppv() {
        let r = macro_metrics(&[0, 0, 1, 1, 2, 2], &[1; 6], 3).unwrap();
        assert!((r.sen - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class[0].undefined, vec!["ppv".to_string()]);
        assert!(macro_metrics(&[0], &[0], 1).is_err());
    }

    #[test]
    fn auc_examples() {
        let s = Tensor::from_rows(&[
            vec![0.2, 0.8],
            vec![0.6, 0.4],
            vec![0.4, 0.6],
            vec![0.8, 0.2],
        ])
        .unwrap();
        // class 1 positives scored 0.8, 0.4; negatives 0.6, 0.2
        let r = auc_ova(&s, &[1, 1, 0, 0]).unwrap();
        assert!((r.per_class[1].unwrap() - 0.75).abs() < 1e-15);
        let flat = Tensor::filled(&[4, 2], 0.5);
        assert_eq!(auc_ova(&flat, &[0, 1, 0, 1]).unwrap().value, 0.5);
        let r = auc_ova(&Tensor::filled(&[2, 3], 0.3), &[0, 1]).unwrap();
        assert_eq!(r.skipped, vec![2]);
    }
}
