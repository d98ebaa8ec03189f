use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Normal quantile used for the 95% confidence interval.
pub const CI_Z: f64 = 1.96;

/// Relative obtainable improvement `(b − a) / (1 − a)`: the share of the
/// headroom above `a` that `b` captures.
pub fn roi(result_a: f64, result_b: f64) -> Result<f64> {
    if !(result_a < 1.0) {
        return Err(Error::invalid(format!(
            "baseline result must be below 1, got {result_a}"
        )));
    }
    Ok((result_b - result_a) / (1.0 - result_a))
}

/// Mean, sample standard deviation, extremes and normal-approximation 95% CI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub mu: f64,
    pub sigma: f64,
    pub min: f64,
    pub max: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RunSummary {
    /// Interval `mu ± 1.96·sigma/√n` for given moments.
    pub fn from_moments(n: usize, mu: f64, sigma: f64) -> (f64, f64) {
        let half = CI_Z * sigma / (n as f64).sqrt();
        (mu - half, mu + half)
    }
}

pub fn summarize_runs(values: &[f64]) -> Result<RunSummary> {
    if values.len() < 2 {
        return Err(Error::invalid("a run summary needs at least two values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("run values must be finite"));
    }
    let n = values.len();
    let mu = values.iter().sum::<f64>() / n as f64;
    let sigma = (values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let (ci_low, ci_high) = RunSummary::from_moments(n, mu, sigma);
    Ok(RunSummary {
        n,
        mu,
        sigma,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ci_low,
        ci_high,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    /// Probability of a statistic at least this large if the treatment mean
    /// does not exceed the baseline mean.
    pub p: f64,
    pub mean_difference: f64,
}

/// Paired one-tailed t-test of `treatment > baseline`.
pub fn paired_t_test_one_tailed(baseline: &[f64], treatment: &[f64]) -> Result<TTestResult> {
    if baseline.len() != treatment.len() || baseline.len() < 2 {
        return Err(Error::invalid(
            "paired test needs two equal-length lists of at least two values",
        ));
    }
    let n = baseline.len();
    let d: Vec<f64> = treatment.iter().zip(baseline).map(|(t, b)| t - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::DegenerateDifferences);
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    Ok(TTestResult {
        t,
        df,
        p: student_t_upper_tail(t, df as f64),
        mean_difference: mean,
    })
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_upper_tail(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Lanczos approximation (g = 7, nine terms) of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let even = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        for coef in [
            even,
            -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0)),
        ] {
            d = 1.0 + coef * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + coef / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_worked_values() {
        assert!((roi(0.60, 0.61).unwrap() - 0.025).abs() < 1e-12);
        assert!((roi(0.98, 0.99).unwrap() - 0.50).abs() < 1e-9);
        assert_eq!(roi(0.3, 0.3).unwrap(), 0.0);
        assert!(roi(1.0, 1.0).is_err());
    }

    #[test]
    fn summary_of_two_values() {
        let s = summarize_runs(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mu, 2.0);
        assert!((s.sigma - 2f64.sqrt()).abs() < 1e-15);
        let c = summarize_runs(&[0.4; 5]).unwrap();
        assert_eq!((c.sigma, c.ci_low, c.ci_high), (0.0, 0.4, 0.4));
        assert!(summarize_runs(&[1.0]).is_err());
    }

    #[test]
    fn three_pair_t_test() {
        let r = paired_t_test_one_tailed(&[1.0, 2.0, 3.0], &[1.5, 3.0, 4.5]).unwrap();
        assert!((r.t - 12f64.sqrt()).abs() < 1e-12);
        // closed form for two degrees of freedom
        let exact = 0.5 * (1.0 - r.t / (r.t * r.t + 2.0).sqrt());
        assert!((r.p - exact).abs() < 1e-12);
        assert!(matches!(
            paired_t_test_one_tailed(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::DegenerateDifferences)
        ));
    }

    #[test]
    fn one_degree_of_freedom_is_cauchy() {
        for t in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let exact = 0.5 - f64::atan(t) / std::f64::consts::PI;
            assert!((student_t_upper_tail(t, 1.0) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_at_integers() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-10);
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }
}
