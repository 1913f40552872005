//! Synthetic spatio-temporal data drawn from a nonstationary GP prior with a
//! known latent field.
//!
//! Space is an `n_x × n_y` grid on the unit square, time runs `0..n_t`. A
//! random subset of the spatial sites is held out for testing at every
//! timestep. The latent profile `g(x) ∈ [0, 1]` varies along `x` only and
//! marks where the field is rough:
//!
//! * PCLSK: both spatial log length scales are `log l − contrast·g(x)`.
//! * LEIS: the latent coordinate is `contrast·∫₀ˣ g`, so it is flat where
//!   `g = 0` and changes quickly where `g = 1`. Since the covariance only
//!   sees latent differences, that is a step in local roughness too.
//!
//! A constant profile reduces both to the stationary base kernel.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::factor::{add_diagonal, Factor};
use crate::gp::kernel::{BaseKernelSpec, GlobalHypers, KernelFamily};
use crate::gp::point::{ObservationSet, SpatioTemporalPoint};
use crate::nonstationary::{unit_base, LocalParams, NgpKind, NsKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentProfile {
    Constant,
    Step,
    Sigmoid,
}

impl std::str::FromStr for LatentProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "step" => Ok(Self::Step),
            "sigmoid" => Ok(Self::Sigmoid),
            other => Err(Error::Config(format!("unknown latent profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    /// Fraction of spatial sites held out for testing.
    pub test_fraction: f64,
    pub kind: NgpKind,
    pub family: KernelFamily,
    pub profile: LatentProfile,
    pub contrast: f64,
    /// `x` position of the change.
    pub boundary: f64,
    /// Sigmoid width in `x`.
    pub width: f64,
    pub sigma_f: f64,
    pub noise_sd: f64,
    /// Base length scales `(l_x, l_y, l_t)`.
    pub lengths: [f64; 3],
    /// LEIS latent length scale.
    pub latent_length: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            nx: 10,
            ny: 10,
            nt: 8,
            test_fraction: 0.5,
            kind: NgpKind::Leis,
            family: KernelFamily::SeAniso,
            profile: LatentProfile::Step,
            contrast: 5.0,
            boundary: 0.5,
            width: 0.05,
            sigma_f: 1.0,
            noise_sd: 0.01,
            lengths: [1.0, 1.0, 3.0],
            latent_length: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.nx < 2 || self.ny < 1 || self.nt < 1 {
            return bad("grid needs nx >= 2, ny >= 1, nt >= 1");
        }
        let sites = self.nx * self.ny;
        let n_test = self.n_test_sites();
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) || n_test == 0 || n_test == sites
        {
            return bad("test_fraction must leave at least one train and one test site");
        }
        for (name, v) in [
            ("sigma_f", self.sigma_f),
            ("width", self.width),
            ("latent_length", self.latent_length),
            ("lengths[0]", self.lengths[0]),
            ("lengths[1]", self.lengths[1]),
            ("lengths[2]", self.lengths[2]),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be finite and > 0"));
            }
        }
        for (name, v) in [("contrast", self.contrast), ("noise_sd", self.noise_sd)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        if !self.boundary.is_finite() {
            return bad("boundary must be finite");
        }
        Ok(())
    }

    fn n_test_sites(&self) -> usize {
        ((self.nx * self.ny) as f64 * self.test_fraction).round() as usize
    }

    /// `g(x)`.
    pub fn profile_at(&self, x: f64) -> f64 {
        match self.profile {
            LatentProfile::Constant => 0.0,
            LatentProfile::Step => f64::from(u8::from(x >= self.boundary)),
            LatentProfile::Sigmoid => 1.0 / (1.0 + (-(x - self.boundary) / self.width).exp()),
        }
    }

    /// `∫₀ˣ g`.
    fn profile_integral(&self, x: f64) -> f64 {
        match self.profile {
            LatentProfile::Constant => 0.0,
            LatentProfile::Step => (x - self.boundary.max(0.0)).max(0.0),
            LatentProfile::Sigmoid => {
                // Width-scaled softplus, linear once the exponential would overflow.
                let sp = |u: f64| {
                    let r = u / self.width;
                    if r > 30.0 {
                        u
                    } else {
                        self.width * r.exp().ln_1p()
                    }
                };
                sp(x - self.boundary) - sp(-self.boundary)
            }
        }
    }

    /// True local parameters at `p`, one entry per latent field.
    pub fn true_latent(&self, p: &SpatioTemporalPoint) -> Vec<f64> {
        match self.kind {
            NgpKind::Leis => vec![self.contrast * self.profile_integral(p.x())],
            NgpKind::Pclsk => {
                let drop = self.contrast * self.profile_at(p.x());
                vec![
                    self.lengths[0].ln() - drop,
                    self.lengths[1].ln() - drop,
                    self.lengths[2].ln(),
                ]
            }
        }
    }

    /// Generating model hyper-parameters.
    pub fn globals(&self) -> Result<GlobalHypers> {
        match self.kind {
            NgpKind::Leis => {
                let base = BaseKernelSpec::from_lengths(self.family, self.lengths)?;
                GlobalHypers::new(self.sigma_f, self.noise_sd, base)?
                    .with_latent_length(self.latent_length)
            }
            NgpKind::Pclsk => {
                GlobalHypers::new(self.sigma_f, self.noise_sd, unit_base(self.family))
            }
        }
    }

    fn local_params(&self, pts: &[SpatioTemporalPoint]) -> LocalParams {
        let v: Vec<Vec<f64>> = pts.iter().map(|p| self.true_latent(p)).collect();
        match self.kind {
            NgpKind::Leis => LocalParams::Leis(v.iter().map(|l| l[0]).collect()),
            NgpKind::Pclsk => LocalParams::Pclsk(v.iter().map(|l| [l[0], l[1], l[2]]).collect()),
        }
    }
}

/// Generated data with the true latent values at every point, stored per
/// latent field in point order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: ObservationSet,
    pub test: ObservationSet,
    pub train_latent: Vec<Vec<f64>>,
    pub test_latent: Vec<Vec<f64>>,
}

fn grid_coord(i: usize, n: usize) -> f64 {
    if n == 1 {
        0.5
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Points, values and per-field true latent values of one split.
type Part = (Vec<SpatioTemporalPoint>, Vec<f64>, Vec<Vec<f64>>);

/// Draws one dataset. The same `(spec, seed)` always gives the same bits.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites: Vec<(f64, f64)> = (0..spec.ny)
        .flat_map(|j| (0..spec.nx).map(move |i| (grid_coord(i, spec.nx), grid_coord(j, spec.ny))))
        .collect();
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.shuffle(&mut rng);
    let mut is_test = vec![false; sites.len()];
    for &s in &order[..spec.n_test_sites()] {
        is_test[s] = true;
    }

    let mut pts = Vec::with_capacity(sites.len() * spec.nt);
    let mut test_flag = Vec::with_capacity(pts.capacity());
    for t in 0..spec.nt {
        for (s, &(x, y)) in sites.iter().enumerate() {
            pts.push(SpatioTemporalPoint::new(x, y, t as f64)?);
            test_flag.push(is_test[s]);
        }
    }
    let h = spec.globals()?;
    let locals = spec.local_params(&pts).packed();
    let mut k = NsKernel::new(spec.kind, &h)?.matrix_sym(&pts, &locals);
    let n = pts.len();
    // A little jitter keeps smooth draws factorizable; it is far below the noise.
    add_diagonal(&mut k, 1e-8 * spec.sigma_f * spec.sigma_f);
    let factor = Factor::new(&k, "synthetic prior").map_err(|e| e.in_stage("synth"))?;
    let l = factor.l().expect("nonempty grid");
    let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let values: Vec<f64> = (0..n)
        .map(|i| (0..=i).map(|j| l[(i, j)] * eps[j]).sum::<f64>() + spec.noise_sd * noise[i])
        .collect();

    let n_fields = spec.kind.n_fields();
    let mut parts: [Part; 2] =
        std::array::from_fn(|_| (Vec::new(), Vec::new(), vec![Vec::new(); n_fields]));
    for ((p, v), test) in pts.iter().zip(values).zip(test_flag) {
        let part = &mut parts[usize::from(test)];
        part.0.push(*p);
        part.1.push(v);
        for (f, z) in part.2.iter_mut().zip(spec.true_latent(p)) {
            f.push(z);
        }
    }
    let [train, test] = parts;
    Ok(SynthData {
        train: ObservationSet::new(train.0, train.1)?,
        test: ObservationSet::new(test.0, test.1)?,
        train_latent: train.2,
        test_latent: test.2,
    })
}

/// Field names used as CSV column headers for the true latent values.
pub fn latent_columns(kind: NgpKind) -> &'static [&'static str] {
    match kind {
        NgpKind::Leis => &["latent"],
        NgpKind::Pclsk => &["log_lx", "log_ly", "log_lt"],
    }
}

/// Writes `x,y,t,split,<fields>` rows for the true latent values.
pub fn write_latent_csv(path: &std::path::Path, kind: NgpKind, data: &SynthData) -> Result<()> {
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["x", "y", "t", "split"];
    header.extend_from_slice(latent_columns(kind));
    w.write_record(&header).map_err(io)?;
    for (set, latent, split) in [
        (&data.train, &data.train_latent, "train"),
        (&data.test, &data.test_latent, "test"),
    ] {
        for (i, p) in set.points().iter().enumerate() {
            let mut rec = vec![
                p.x().to_string(),
                p.y().to_string(),
                p.t().to_string(),
                split.to_string(),
            ];
            rec.extend(latent.iter().map(|f| f[i].to_string()));
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(profile: LatentProfile, kind: NgpKind) -> SynthSpec {
        SynthSpec {
            nx: 6,
            ny: 4,
            nt: 3,
            profile,
            kind,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn splits_are_disjoint_in_space_and_sized() {
        let s = small(LatentProfile::Step, NgpKind::Leis);
        let d = synth_generate(&s, 3).unwrap();
        assert_eq!(d.train.len() + d.test.len(), 6 * 4 * 3);
        assert_eq!(d.test.len(), 12 * 3);
        for p in d.test.points() {
            assert!(d.train.points().iter().all(|q| q.spatial() != p.spatial()));
        }
        assert_eq!(d.train_latent[0].len(), d.train.len());
    }

    #[test]
    fn same_seed_same_bits() {
        for kind in [NgpKind::Leis, NgpKind::Pclsk] {
            let s = small(LatentProfile::Sigmoid, kind);
            assert_eq!(
                synth_generate(&s, 9).unwrap(),
                synth_generate(&s, 9).unwrap()
            );
            assert_ne!(
                synth_generate(&s, 9).unwrap().train,
                synth_generate(&s, 10).unwrap().train
            );
        }
    }

    #[test]
    fn latent_profiles() {
        let s = SynthSpec::default();
        let p = |x| SpatioTemporalPoint::new(x, 0.0, 0.0).unwrap();
        assert_eq!(s.true_latent(&p(0.3)), vec![0.0]);
        assert!((s.true_latent(&p(0.75))[0] - 5.0 * 0.25).abs() < 1e-12);
        let sig = SynthSpec {
            profile: LatentProfile::Sigmoid,
            ..s
        };
        // The integrated sigmoid starts at zero and approaches the step's ramp.
        assert!(sig.true_latent(&p(0.0))[0].abs() < 1e-12);
        let far = sig.true_latent(&p(1.0))[0];
        assert!((far - 5.0 * 0.5).abs() < 0.1, "{far}");
        let pc = SynthSpec {
            kind: NgpKind::Pclsk,
            contrast: 1.0,
            ..s
        };
        let z = pc.true_latent(&p(0.9));
        assert!((z[0] - (1.0f64.ln() - 1.0)).abs() < 1e-12 && z[2] == 3f64.ln());
    }

    #[test]
    fn invalid_specs_rejected() {
        let s = SynthSpec::default();
        for bad in [
            SynthSpec { nx: 1, ..s },
            SynthSpec {
                test_fraction: 0.0,
                ..s
            },
            SynthSpec {
                test_fraction: 0.999,
                ..s
            },
            SynthSpec {
                noise_sd: -1.0,
                ..s
            },
            SynthSpec {
                lengths: [0.1, f64::NAN, 1.0],
                ..s
            },
        ] {
            assert!(matches!(synth_generate(&bad, 0), Err(Error::Config(_))));
        }
    }
}
