//! Model snapshots: everything needed to reuse a fit, as JSON.

use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::simulate::Standardization;
use crate::error::{Error, Result};
use crate::gp::kernel::GlobalHypers;
use crate::gp::point::SpatioTemporalPoint;
use crate::nonstationary::{CovarianceModel, FittedNgp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SnapshotModel {
    Stationary { globals: GlobalHypers },
    Nonstationary { model: FittedNgp },
}

impl CovarianceModel for SnapshotModel {
    fn noise_sd(&self) -> f64 {
        match self {
            Self::Stationary { globals } => globals.noise_sd(),
            Self::Nonstationary { model } => model.noise_sd(),
        }
    }

    fn cov_matrix(&self, a: &[SpatioTemporalPoint], b: &[SpatioTemporalPoint]) -> Result<Mat<f64>> {
        match self {
            Self::Stationary { globals } => globals.cov_matrix(a, b),
            Self::Nonstationary { model } => model.cov_matrix(a, b),
        }
    }

    fn cov_matrix_sym(&self, a: &[SpatioTemporalPoint]) -> Result<Mat<f64>> {
        match self {
            Self::Stationary { globals } => globals.cov_matrix_sym(a),
            Self::Nonstationary { model } => model.cov_matrix_sym(a),
        }
    }

    fn prior_variance(&self, a: &[SpatioTemporalPoint]) -> Vec<f64> {
        match self {
            Self::Stationary { globals } => globals.prior_variance(a),
            Self::Nonstationary { model } => model.prior_variance(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub model: SnapshotModel,
    pub standardization: Standardization,
}

impl ModelSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("model snapshot: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.in_stage(path.display().to_string()))
    }
}
