//! Experiment configuration: flat TOML keys, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::simulate::SimulationOptions;
use super::synth::{LatentProfile, SynthSpec};
use crate::error::{Error, Result};
use crate::gp::kernel::KernelFamily;
use crate::lisal::LisalConfig;
use crate::nonstationary::NgpKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset CSV; synthetic data is generated when absent.
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    /// Observations per timestep.
    pub k: usize,
    pub standardize: bool,
    pub history_window: usize,

    pub kind: NgpKind,
    pub family: KernelFamily,
    pub m1: usize,
    pub m2: usize,
    pub c: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub perturb_sd: f64,
    pub latent_perturb_sd: f64,
    pub latent_length: f64,
    pub latent_jitter: f64,

    pub synth_nx: usize,
    pub synth_ny: usize,
    pub synth_nt: usize,
    pub synth_test_fraction: f64,
    pub synth_profile: LatentProfile,
    pub synth_contrast: f64,
    pub synth_boundary: f64,
    pub synth_width: f64,
    pub synth_sigma_f: f64,
    pub synth_noise_sd: f64,
    pub synth_lengths: [f64; 3],
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let l = LisalConfig::default();
        let s = SynthSpec::default();
        Self {
            data: None,
            seed: 0,
            out: PathBuf::from("out"),
            k: 6,
            standardize: true,
            history_window: 0,
            kind: l.kind,
            family: l.family,
            m1: l.m1,
            m2: l.m2,
            c: l.c,
            restarts: l.restarts,
            max_iter: l.max_iter,
            rel_tol: l.rel_tol,
            perturb_sd: l.perturb_sd,
            latent_perturb_sd: l.latent_perturb_sd,
            latent_length: l.latent_length,
            latent_jitter: l.latent_jitter,
            synth_nx: s.nx,
            synth_ny: s.ny,
            synth_nt: s.nt,
            synth_test_fraction: s.test_fraction,
            synth_profile: s.profile,
            synth_contrast: s.contrast,
            synth_boundary: s.boundary,
            synth_width: s.width,
            synth_sigma_f: s.sigma_f,
            synth_noise_sd: s.noise_sd,
            synth_lengths: s.lengths,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| e.in_stage(path.display().to_string()))?;
        // A relative data path is taken relative to the config file.
        if let (Some(d), Some(dir)) = (&cfg.data, path.parent()) {
            if d.is_relative() {
                cfg.data = Some(dir.join(d));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn lisal(&self) -> LisalConfig {
        LisalConfig {
            m1: self.m1,
            m2: self.m2,
            c: self.c,
            kind: self.kind,
            family: self.family,
            seed: self.seed,
            restarts: self.restarts,
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            perturb_sd: self.perturb_sd,
            latent_perturb_sd: self.latent_perturb_sd,
            latent_length: self.latent_length,
            latent_jitter: self.latent_jitter,
        }
    }

    /// Synthetic data follows the configured model kind and family.
    pub fn synth(&self) -> SynthSpec {
        SynthSpec {
            nx: self.synth_nx,
            ny: self.synth_ny,
            nt: self.synth_nt,
            test_fraction: self.synth_test_fraction,
            kind: self.kind,
            family: self.family,
            profile: self.synth_profile,
            contrast: self.synth_contrast,
            boundary: self.synth_boundary,
            width: self.synth_width,
            sigma_f: self.synth_sigma_f,
            noise_sd: self.synth_noise_sd,
            lengths: self.synth_lengths,
            latent_length: self.latent_length,
        }
    }

    pub fn simulation(&self) -> SimulationOptions {
        SimulationOptions {
            k: self.k,
            history_window: self.history_window,
        }
    }

    /// Checks that need no data. LISAL budgets are checked against the
    /// training set size once it is known.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        match &self.data {
            Some(p) if !p.is_file() => {
                return Err(Error::Config(format!(
                    "data file {} does not exist",
                    p.display()
                )))
            }
            Some(_) => {}
            None => self.synth().validate()?,
        }
        self.lisal().validate(usize::MAX)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.k, 6);
        assert_eq!((c.m1, c.m2), (6, 6));
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c =
            ExperimentConfig::from_toml("seed = 7\nkind = \"pclsk\"\nfamily = \"ch_ex3\"\nc = 0\n")
                .unwrap();
        assert_eq!(
            (c.seed, c.kind, c.family, c.c),
            (7, NgpKind::Pclsk, KernelFamily::ChEx3, 0)
        );
        assert_eq!(c.synth().kind, NgpKind::Pclsk);
    }

    #[test]
    fn unknown_and_invalid_fields_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("bogus = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml("kind = \"x\""),
            Err(Error::Config(_))
        ));
        let c = ExperimentConfig::from_toml("k = 0").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ExperimentConfig::from_toml("data = \"/no/such/file.csv\"").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ExperimentConfig::from_toml("synth_nx = 1").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ExperimentConfig::from_toml("latent_length = -1.0").unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
