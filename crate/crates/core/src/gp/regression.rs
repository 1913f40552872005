use std::f64::consts::PI;

use faer::Mat;

use super::factor::{add_diagonal, Factor};
use super::kernel::{cov_matrix, CovFn};
use super::point::{ObservationSet, SpatioTemporalPoint};
use crate::error::Result;

/// Tolerance below which a negative predictive variance is treated as round-off.
pub const VARIANCE_SLACK: f64 = 1e-9;

/// Gaussian log density of `y` under `N(0, K_y)`, given a factor of `K_y`.
pub fn gaussian_log_density(factor: &Factor, y: &[f64]) -> (f64, Vec<f64>) {
    let alpha = factor.solve(y);
    let fit: f64 = alpha.iter().zip(y).map(|(a, b)| a * b).sum();
    let n = y.len() as f64;
    (
        -0.5 * fit - 0.5 * factor.log_det() - 0.5 * n * (2.0 * PI).ln(),
        alpha,
    )
}

/// Log marginal likelihood with `K_y = K(X, X) + σ_n² I`.
pub fn log_marginal_likelihood<K: CovFn + ?Sized>(
    data: &ObservationSet,
    kfn: &K,
    sigma_n: f64,
) -> Result<f64> {
    let mut ky = cov_matrix(data.points(), data.points(), kfn);
    add_diagonal(&mut ky, sigma_n * sigma_n);
    let factor = Factor::new(&ky, "log marginal likelihood")?;
    Ok(gaussian_log_density(&factor, data.values()).0)
}

#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub cov: Mat<f64>,
    /// Number of diagonal entries that came out negative and were clamped to zero.
    pub clamped: usize,
}

impl Posterior {
    pub fn variances(&self) -> Vec<f64> {
        (0..self.cov.nrows()).map(|i| self.cov[(i, i)]).collect()
    }
}

/// Joint predictive distribution of the latent function at `xq`.
pub fn posterior<K: CovFn + ?Sized>(
    data: &ObservationSet,
    kfn: &K,
    sigma_n: f64,
    xq: &[SpatioTemporalPoint],
) -> Result<Posterior> {
    let kqq = cov_matrix(xq, xq, kfn);
    if data.is_empty() {
        return Ok(Posterior {
            mean: vec![0.0; xq.len()],
            cov: kqq,
            clamped: 0,
        });
    }
    let mut ky = cov_matrix(data.points(), data.points(), kfn);
    add_diagonal(&mut ky, sigma_n * sigma_n);
    let kxq = cov_matrix(data.points(), xq, kfn);
    condition(&ky, &kxq, kqq, data.values())
}

/// Conditions a zero-mean joint Gaussian on observed values.
///
/// `ky` is the (noisy) covariance of the observations, `kxq` the cross
/// covariance observations × queries, `kqq` the prior query covariance.
pub fn condition(ky: &Mat<f64>, kxq: &Mat<f64>, kqq: Mat<f64>, y: &[f64]) -> Result<Posterior> {
    let factor = Factor::new(ky, "posterior")?;
    let alpha = factor.solve(y);
    let nq = kxq.ncols();
    let mean = (0..nq)
        .map(|j| (0..y.len()).map(|i| kxq[(i, j)] * alpha[i]).sum())
        .collect();
    let v = factor.half_solve_mat(kxq);
    let mut cov = kqq;
    for j in 0..nq {
        for i in 0..=j {
            let s: f64 = (0..v.nrows()).map(|r| v[(r, i)] * v[(r, j)]).sum();
            let c = cov[(i, j)] - s;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let clamped = clamp_variances(&mut cov);
    Ok(Posterior { mean, cov, clamped })
}

/// Pointwise predictive means and variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub clamped: usize,
}

/// Like [`condition`] but only the diagonal of the predictive covariance is formed.
pub fn condition_marginals(
    ky: &Mat<f64>,
    kxq: &Mat<f64>,
    prior_var: &[f64],
    y: &[f64],
) -> Result<Prediction> {
    let nq = kxq.ncols();
    if y.is_empty() {
        return Ok(Prediction {
            mean: vec![0.0; nq],
            variance: prior_var.to_vec(),
            clamped: 0,
        });
    }
    let factor = Factor::new(ky, "posterior")?;
    let alpha = factor.solve(y);
    let v = factor.half_solve_mat(kxq);
    let mut clamped = 0;
    let mut mean = Vec::with_capacity(nq);
    let mut variance = Vec::with_capacity(nq);
    for j in 0..nq {
        mean.push((0..y.len()).map(|i| kxq[(i, j)] * alpha[i]).sum());
        let s: f64 = (0..v.nrows()).map(|r| v[(r, j)] * v[(r, j)]).sum();
        let mut var = prior_var[j] - s;
        if var < 0.0 {
            if var < -VARIANCE_SLACK {
                log::warn!("predictive variance {var:e} at query {j} clamped to zero");
            }
            var = 0.0;
            clamped += 1;
        }
        variance.push(var);
    }
    Ok(Prediction {
        mean,
        variance,
        clamped,
    })
}

fn clamp_variances(cov: &mut Mat<f64>) -> usize {
    let mut clamped = 0;
    for i in 0..cov.nrows() {
        let v = cov[(i, i)];
        if v < 0.0 {
            if v < -VARIANCE_SLACK {
                log::warn!("predictive variance {v:e} at query {i} clamped to zero");
            }
            cov[(i, i)] = 0.0;
            clamped += 1;
        }
    }
    clamped
}
