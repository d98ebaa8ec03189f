//! Mean-field Gaussian posteriors and the flipout estimator for dense layers.
//!
//! A flipout layer keeps a posterior `N(mu, softplus(rho)^2)` over every
//! weight and bias. A stochastic forward pass draws one base perturbation
//! `ΔŴ = softplus(rho) ∘ ε` shared by the batch and decorrelates the samples
//! with per-row sign vectors:
//!
//! ```text
//! Z = X·W̄ + ((X ∘ B)·ΔŴ) ∘ A + b
//! ```
//!
//! where `B` (batch × inputs) and `A` (batch × units) hold uniform ±1 draws.

use serde::{Deserialize, Serialize};

use super::linalg::{matmul, matmul_a_bt, matmul_at_b_acc};
use crate::numerics::{PrngStream, Tensor};
use crate::{Error, Result};

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Factorised Gaussian `q(w) = N(mu, softplus(rho)^2)` with a zero-mean
/// Gaussian prior of standard deviation `prior_std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mu: Tensor,
    pub rho: Tensor,
    pub prior_std: f64,
}

impl GaussianPosterior {
    pub fn new(mu: Tensor, rho: Tensor, prior_std: f64) -> Result<Self> {
        if mu.shape() != rho.shape() {
            return Err(Error::shape(format!(
                "posterior mu {:?} and rho {:?} differ",
                mu.shape(),
                rho.shape()
            )));
        }
        if !(prior_std > 0.0) {
            return Err(Error::invalid(format!(
                "prior std must be > 0, got {prior_std}"
            )));
        }
        Ok(GaussianPosterior { mu, rho, prior_std })
    }

    pub fn std(&self) -> Tensor {
        self.rho.map(softplus)
    }

    /// `log q(w) - log p(w)` at the reparameterised draw `w = mu + σ∘ε`,
    /// with its gradients with respect to `mu` and `rho` (ε held fixed).
    pub fn log_ratio(&self, eps: &[f64]) -> (f64, Tensor, Tensor) {
        let (sigma, dsig) = spread(&self.rho);
        self.log_ratio_at(eps, &sigma, &dsig)
    }

    fn log_ratio_at(&self, eps: &[f64], sigma: &[f64], dsig: &[f64]) -> (f64, Tensor, Tensor) {
        let s2 = self.prior_std * self.prior_std;
        let ln_s = self.prior_std.ln();
        let mut value = 0.0;
        let mut d_mu = Tensor::zeros(self.mu.shape());
        let mut d_rho = Tensor::zeros(self.mu.shape());
        let (gm, gr) = (d_mu.data_mut(), d_rho.data_mut());
        for (j, (&mu, &e)) in self.mu.data().iter().zip(eps).enumerate() {
            let w = mu + sigma[j] * e;
            value += -sigma[j].ln() - 0.5 * e * e + ln_s + 0.5 * w * w / s2;
            gm[j] = w / s2;
            gr[j] = (-1.0 / sigma[j] + e * w / s2) * dsig[j];
        }
        (value, d_mu, d_rho)
    }
}

/// `softplus(rho)` and its derivative `sigmoid(rho)` from one exponential each.
fn spread(rho: &Tensor) -> (Vec<f64>, Vec<f64>) {
    rho.data()
        .iter()
        .map(|&r| {
            if r > 30.0 {
                (r, 1.0)
            } else {
                let e = r.exp();
                (e.ln_1p(), e / (1.0 + e))
            }
        })
        .unzip()
}

/// `ΔŴ ∘ (a bᵀ)`: `a` runs along the rows of `delta_hat`, `b` along its columns.
pub fn flipout_perturb(delta_hat: &Tensor, a: &[f64], b: &[f64]) -> Result<Tensor> {
    let [rows, cols] = delta_hat.shape() else {
        return Err(Error::shape("flipout perturbation must be a matrix"));
    };
    if a.len() != *rows || b.len() != *cols {
        return Err(Error::shape(format!(
            "sign vectors {}x{} do not fit a {rows}x{cols} perturbation",
            a.len(),
            b.len()
        )));
    }
    if let Some(bad) = a.iter().chain(b).find(|&&s| s != 1.0 && s != -1.0) {
        return Err(Error::invalid(format!("sign vector entry {bad} is not ±1")));
    }
    let mut out = delta_hat.clone();
    for (i, row) in out.data_mut().chunks_mut(*cols).enumerate() {
        for (v, &bj) in row.iter_mut().zip(b) {
            *v *= a[i] * bj;
        }
    }
    Ok(out)
}

/// Flipout pre-activation `X·W̄ + ((X∘B)·ΔŴ)∘A + bias` for given draws.
pub fn flipout_preactivation(
    x: &Tensor,
    mean_w: &Tensor,
    delta_w: &Tensor,
    sign_in: &Tensor,
    sign_out: &Tensor,
    bias: &[f64],
) -> Result<Tensor> {
    let m = x.rows();
    let k = x.row_len();
    let [kw, n] = mean_w.shape() else {
        return Err(Error::shape("flipout weights must be a matrix"));
    };
    let n = *n;
    if *kw != k || delta_w.shape() != mean_w.shape() || bias.len() != n {
        return Err(Error::shape("flipout operands do not conform"));
    }
    if sign_in.shape() != [m, k] || sign_out.shape() != [m, n] {
        return Err(Error::shape("flipout sign matrices do not conform"));
    }
    let xb: Vec<f64> = x
        .data()
        .iter()
        .zip(sign_in.data())
        .map(|(a, b)| a * b)
        .collect();
    let mut z = matmul(x.data(), mean_w.data(), m, k, n);
    let pert = matmul(&xb, delta_w.data(), m, k, n);
    for r in 0..m {
        for c in 0..n {
            z[r * n + c] += pert[r * n + c] * sign_out.data()[r * n + c] + bias[c];
        }
    }
    Tensor::new(vec![m, n], z)
}

/// Dense layer with a Gaussian posterior over weights and biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipoutDense {
    /// `[inputs, units]`
    pub weight: GaussianPosterior,
    /// `[units]`
    pub bias: GaussianPosterior,
}

#[derive(Clone, Debug)]
pub(crate) struct FlipoutCache {
    input: Tensor,
    draw: Option<FlipoutDraw>,
}

#[derive(Clone, Debug)]
struct FlipoutDraw {
    eps_w: Vec<f64>,
    eps_b: Vec<f64>,
    sigma_w: Vec<f64>,
    dsig_w: Vec<f64>,
    sigma_b: Vec<f64>,
    dsig_b: Vec<f64>,
    delta_w: Tensor,
    x_signed: Vec<f64>,
    sign_in: Vec<f64>,
    sign_out: Vec<f64>,
}

fn fill_signs(stream: &mut PrngStream, out: &mut [f64]) {
    for chunk in out.chunks_mut(64) {
        let bits = stream.next_u64();
        for (j, v) in chunk.iter_mut().enumerate() {
            *v = if (bits >> j) & 1 == 0 { 1.0 } else { -1.0 };
        }
    }
}

impl FlipoutDense {
    pub fn inputs(&self) -> usize {
        self.weight.mu.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weight.mu.shape()[1]
    }

    pub(crate) fn forward(
        &self,
        x: &Tensor,
        stochastic: bool,
        noise: &mut PrngStream,
        keep: bool,
    ) -> Result<(Tensor, Option<FlipoutCache>)> {
        let (m, k, n) = (x.rows(), self.inputs(), self.units());
        if x.row_len() != k {
            return Err(Error::shape(format!(
                "flipout layer expects {k} inputs, got {}",
                x.row_len()
            )));
        }
        if !stochastic {
            let mut z = matmul(x.data(), self.weight.mu.data(), m, k, n);
            for row in z.chunks_mut(n) {
                for (v, b) in row.iter_mut().zip(self.bias.mu.data()) {
                    *v += b;
                }
            }
            let cache = keep.then(|| FlipoutCache {
                input: x.clone(),
                draw: None,
            });
            return Ok((Tensor::new(vec![m, n], z)?, cache));
        }
        let eps_w: Vec<f64> = (0..k * n).map(|_| noise.standard_normal()).collect();
        let eps_b: Vec<f64> = (0..n).map(|_| noise.standard_normal()).collect();
        let mut sign_in = vec![0.0; m * k];
        let mut sign_out = vec![0.0; m * n];
        fill_signs(noise, &mut sign_in);
        fill_signs(noise, &mut sign_out);
        let (sigma_w, dsig_w) = spread(&self.weight.rho);
        let (sigma_b, dsig_b) = spread(&self.bias.rho);
        let delta: Vec<f64> = sigma_w.iter().zip(&eps_w).map(|(s, e)| s * e).collect();
        let delta_w = Tensor::new(vec![k, n], delta)?;
        let bias: Vec<f64> = self
            .bias
            .mu
            .data()
            .iter()
            .zip(&sigma_b)
            .zip(&eps_b)
            .map(|((&mu, &s), &e)| mu + s * e)
            .collect();
        let sign_in_t = Tensor::new(vec![m, k], sign_in)?;
        let sign_out_t = Tensor::new(vec![m, n], sign_out)?;
        let z =
            flipout_preactivation(x, &self.weight.mu, &delta_w, &sign_in_t, &sign_out_t, &bias)?;
        if !keep {
            return Ok((z, None));
        }
        let x_signed = x
            .data()
            .iter()
            .zip(sign_in_t.data())
            .map(|(a, b)| a * b)
            .collect();
        let cache = FlipoutCache {
            input: x.clone(),
            draw: Some(FlipoutDraw {
                eps_w,
                eps_b,
                sigma_w,
                dsig_w,
                sigma_b,
                dsig_b,
                delta_w,
                x_signed,
                sign_in: sign_in_t.into_data(),
                sign_out: sign_out_t.into_data(),
            }),
        };
        Ok((z, Some(cache)))
    }

    /// Returns the input gradient and `[d mu_w, d rho_w, d mu_b, d rho_b]`.
    pub(crate) fn backward(
        &self,
        cache: &FlipoutCache,
        grad: &Tensor,
        need_dx: bool,
    ) -> Result<(Option<Tensor>, Vec<Tensor>)> {
        let (m, k, n) = (grad.rows(), self.inputs(), self.units());
        let g = grad.data();
        let mut d_mu_w = Tensor::zeros(&[k, n]);
        matmul_at_b_acc(cache.input.data(), g, m, k, n, d_mu_w.data_mut());
        let mut d_mu_b = Tensor::zeros(&[n]);
        for row in g.chunks(n) {
            for (d, v) in d_mu_b.data_mut().iter_mut().zip(row) {
                *d += v;
            }
        }
        let mut dx = if need_dx {
            matmul_a_bt(g, self.weight.mu.data(), m, n, k)
        } else {
            Vec::new()
        };
        let mut d_rho_w = Tensor::zeros(&[k, n]);
        let mut d_rho_b = Tensor::zeros(&[n]);
        if let Some(draw) = &cache.draw {
            let ga: Vec<f64> = g.iter().zip(&draw.sign_out).map(|(a, b)| a * b).collect();
            let mut d_delta = vec![0.0; k * n];
            matmul_at_b_acc(&draw.x_signed, &ga, m, k, n, &mut d_delta);
            for (j, d) in d_rho_w.data_mut().iter_mut().enumerate() {
                *d = d_delta[j] * draw.eps_w[j] * draw.dsig_w[j];
            }
            for (j, d) in d_rho_b.data_mut().iter_mut().enumerate() {
                *d = d_mu_b.data()[j] * draw.eps_b[j] * draw.dsig_b[j];
            }
            if need_dx {
                let back = matmul_a_bt(&ga, draw.delta_w.data(), m, n, k);
                for ((v, b), s) in dx.iter_mut().zip(&back).zip(&draw.sign_in) {
                    *v += b * s;
                }
            }
        }
        let grads = vec![d_mu_w, d_rho_w, d_mu_b, d_rho_b];
        if !need_dx {
            return Ok((None, grads));
        }
        let mut shape = cache.input.shape().to_vec();
        shape[0] = m;
        Ok((Some(Tensor::new(shape, dx)?), grads))
    }

    /// KL estimate `log q(W) - log p(W)` at this pass's draw, with gradients in
    /// parameter order. Zero for deterministic passes.
    pub(crate) fn kl(&self, cache: &FlipoutCache) -> (f64, Vec<Tensor>) {
        match &cache.draw {
            None => {
                let zeros = self
                    .params()
                    .iter()
                    .map(|p| Tensor::zeros(p.shape()))
                    .collect();
                (0.0, zeros)
            }
            Some(draw) => {
                let (kw, gmw, grw) =
                    self.weight
                        .log_ratio_at(&draw.eps_w, &draw.sigma_w, &draw.dsig_w);
                let (kb, gmb, grb) =
                    self.bias
                        .log_ratio_at(&draw.eps_b, &draw.sigma_b, &draw.dsig_b);
                (kw + kb, vec![gmw, grw, gmb, grb])
            }
        }
    }

    pub(crate) fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.weight.mu,
            &self.weight.rho,
            &self.bias.mu,
            &self.bias.rho,
        ]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.weight.mu,
            &mut self.weight.rho,
            &mut self.bias.mu,
            &mut self.bias.rho,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn perturb_examples() {
        let d = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(flipout_perturb(&d, &[1.0, 1.0], &[1.0, 1.0]).unwrap(), d);
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(flipout_perturb(&z, &[1.0, -1.0], &[-1.0, 1.0]).unwrap(), z);
        let p = flipout_perturb(&d, &[1.0, -1.0], &[1.0, -1.0]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, -3.0, 4.0]);
        assert!(matches!(
            flipout_perturb(&d, &[1.0, 0.5], &[1.0, 1.0]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(flipout_perturb(&d, &[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn hand_evaluated_preactivation() {
        // X=[[1]], W̄=[[0]], ΔŴ=[[1]], a=[1] on outputs, b=[-1] on inputs
        let z = flipout_preactivation(
            &t(&[1, 1], &[1.0]),
            &t(&[1, 1], &[0.0]),
            &t(&[1, 1], &[1.0]),
            &t(&[1, 1], &[-1.0]),
            &t(&[1, 1], &[1.0]),
            &[0.0],
        )
        .unwrap();
        assert_eq!(z.data(), &[-1.0]);
    }

    #[test]
    fn zero_perturbation_is_plain_product() {
        let x = t(&[2, 3], &[0.5, -1.0, 2.0, 1.5, 0.0, -0.5]);
        let w = t(&[3, 2], &[1.0, -2.0, 0.5, 0.25, -1.0, 3.0]);
        let signs_in = t(&[2, 3], &[1.0, -1.0, 1.0, -1.0, -1.0, 1.0]);
        let signs_out = t(&[2, 2], &[-1.0, 1.0, 1.0, -1.0]);
        let z = flipout_preactivation(
            &x,
            &w,
            &Tensor::zeros(&[3, 2]),
            &signs_in,
            &signs_out,
            &[0.0, 0.0],
        )
        .unwrap();
        assert_eq!(z.data(), matmul(x.data(), w.data(), 2, 3, 2).as_slice());
    }

    #[test]
    fn per_row_perturbation_matches_rank_one_signs() {
        let mut s = PrngStream::new(4, 0);
        let x = t(&[3, 2], &[0.3, -1.2, 2.0, 0.7, -0.4, 0.9]);
        let mu = t(&[2, 3], &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        let delta = t(&[2, 3], &[0.05, 0.02, -0.03, 0.01, 0.04, -0.06]);
        let mut si = vec![0.0; 6];
        let mut so = vec![0.0; 9];
        fill_signs(&mut s, &mut si);
        fill_signs(&mut s, &mut so);
        let si = t(&[3, 2], &si);
        let so = t(&[3, 3], &so);
        let bias = [0.1, 0.0, -0.1];
        let z = flipout_preactivation(&x, &mu, &delta, &si, &so, &bias).unwrap();
        for r in 0..3 {
            let pert = flipout_perturb(&delta, si.row(r), so.row(r)).unwrap();
            for c in 0..3 {
                let want: f64 = (0..2)
                    .map(|i| x.row(r)[i] * (mu.data()[i * 3 + c] + pert.data()[i * 3 + c]))
                    .sum::<f64>()
                    + bias[c];
                assert!((z.row(r)[c] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn softplus_pair() {
        for y in [1e-3, 0.05, 1.0, 5.0, 40.0] {
            assert!((softplus(inverse_softplus(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
        assert!((inverse_softplus(0.05) - (-2.970_628_109_057_377)).abs() < 1e-9);
    }

    #[test]
    fn log_ratio_vanishes_when_posterior_is_prior() {
        let post = GaussianPosterior::new(
            Tensor::zeros(&[3]),
            Tensor::filled(&[3], inverse_softplus(1.0)),
            1.0,
        )
        .unwrap();
        let (v, _, _) = post.log_ratio(&[0.3, -1.7, 2.2]);
        assert!(v.abs() < 1e-12);
    }
}
