//! The latent GP: a stationary squared-exponential GP over local
//! hyper-parameter values, observed at a sparse set of latent locations.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::factor::{add_diagonal, Factor};
use crate::gp::kernel::{cov_matrix, BaseKernelSpec, StationaryKernel};
use crate::gp::point::SpatioTemporalPoint;
use crate::gp::regression::gaussian_log_density;

/// Default latent jitter standard deviation.
pub const DEFAULT_LATENT_JITTER: f64 = 1e-3;

/// Latent-GP hyper-parameters, all stored as logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentHypers {
    pub log_sigma_f: f64,
    pub log_lengths: [f64; 3],
    pub log_jitter: f64,
}

impl LatentHypers {
    pub fn new(sigma_f: f64, lengths: [f64; 3], jitter: f64) -> Result<Self> {
        let all = [sigma_f, lengths[0], lengths[1], lengths[2], jitter];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!(
                "latent hyper-parameters must be finite and > 0: {all:?}"
            )));
        }
        Ok(Self {
            log_sigma_f: sigma_f.ln(),
            log_lengths: lengths.map(f64::ln),
            log_jitter: jitter.ln(),
        })
    }

    pub fn sigma_f(&self) -> f64 {
        self.log_sigma_f.exp()
    }

    pub fn jitter(&self) -> f64 {
        self.log_jitter.exp()
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.log_lengths.map(f64::exp)
    }

    /// Ratio of latent signal sd to jitter sd.
    pub fn signal_to_jitter(&self) -> f64 {
        (self.log_sigma_f - self.log_jitter).exp()
    }

    pub fn kernel(&self) -> StationaryKernel {
        StationaryKernel::new(
            BaseKernelSpec::SeAniso {
                log_lengths: self.log_lengths,
            },
            self.sigma_f(),
        )
    }
}

/// Local hyper-parameter values `z_M` at latent locations `X_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentField {
    locations: Vec<SpatioTemporalPoint>,
    values: Vec<f64>,
    pub hypers: LatentHypers,
    /// Leading entries of `values` held constant during optimization.
    frozen_prefix: usize,
}

impl LatentField {
    pub fn new(
        locations: Vec<SpatioTemporalPoint>,
        values: Vec<f64>,
        hypers: LatentHypers,
        frozen_prefix: usize,
    ) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} latent locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if locations.is_empty() {
            return Err(Error::invalid("latent field needs at least one location"));
        }
        if frozen_prefix > values.len() {
            return Err(Error::invalid(format!(
                "frozen prefix {frozen_prefix} exceeds {} latent values",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite latent value at {i}")));
        }
        Ok(Self {
            locations,
            values,
            hypers,
            frozen_prefix,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn locations(&self) -> &[SpatioTemporalPoint] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frozen_prefix(&self) -> usize {
        self.frozen_prefix
    }

    pub fn set_frozen_prefix(&mut self, k: usize) -> Result<()> {
        if k > self.len() {
            return Err(Error::invalid(format!(
                "frozen prefix {k} exceeds {} latent values",
                self.len()
            )));
        }
        self.frozen_prefix = k;
        Ok(())
    }

    /// Overwrites the non-frozen values; frozen entries are left untouched.
    pub(crate) fn set_free_value(&mut self, i: usize, v: f64) {
        debug_assert!(i >= self.frozen_prefix);
        self.values[i] = v;
    }

    /// Appends new latent locations with the given initial values.
    pub fn extend(&mut self, locations: &[SpatioTemporalPoint], values: &[f64]) -> Result<()> {
        if locations.len() != values.len() {
            return Err(Error::invalid("latent extension length mismatch"));
        }
        self.locations.extend_from_slice(locations);
        self.values.extend_from_slice(values);
        Ok(())
    }

    /// `K_z(X_M, X_M) + σ_jit² I`.
    pub(crate) fn gram(&self) -> Mat<f64> {
        let mut a = cov_matrix(&self.locations, &self.locations, &self.hypers.kernel());
        let j = self.hypers.jitter();
        add_diagonal(&mut a, j * j);
        a
    }

    pub(crate) fn predictor(&self) -> Result<LatentPredictor<'_>> {
        let factor = Factor::new(&self.gram(), "latent GP")?;
        let weights = factor.solve(&self.values);
        Ok(LatentPredictor {
            field: self,
            kernel: self.hypers.kernel(),
            weights,
        })
    }
}

/// A latent field with `[K_z + σ_jit² I]⁻¹ z_M` precomputed.
pub(crate) struct LatentPredictor<'a> {
    field: &'a LatentField,
    kernel: StationaryKernel,
    weights: Vec<f64>,
}

impl LatentPredictor<'_> {
    pub(crate) fn predict(&self, xq: &[SpatioTemporalPoint]) -> Vec<f64> {
        let m = self.field.locations();
        xq.iter()
            .map(|q| {
                m.iter()
                    .zip(&self.weights)
                    .map(|(p, w)| self.kernel.eval(q, p) * w)
                    .sum()
            })
            .collect()
    }
}

/// Latent predictive mean `K_z(X_q, X_M) [K_z(X_M, X_M) + σ_jit² I]⁻¹ z_M`.
pub fn latent_predict_mean(field: &LatentField, xq: &[SpatioTemporalPoint]) -> Result<Vec<f64>> {
    Ok(field.predictor()?.predict(xq))
}

/// Log marginal likelihood of `z_M` under the latent GP.
pub fn latent_lml(field: &LatentField) -> Result<f64> {
    let factor = Factor::new(&field.gram(), "latent GP")?;
    Ok(gaussian_log_density(&factor, field.values()).0)
}
