//! Stationary spatio-temporal covariance functions.
//!
//! Every family is written as a unit-amplitude *profile* `φ(q_s, q_t)` of a
//! scaled squared spatial distance `q_s` and a scaled squared temporal
//! distance `q_t`, multiplied by `σ_f²`:
//!
//! * `SeAniso`: `φ = exp(-(q_s + q_t)/2)` with `q_s = dx²/l_x² + dy²/l_y²`, `q_t = dt²/l_t²`.
//! * `ChEx1`: `φ = D⁻¹ exp(-q_s / D)`, `D = 1 + q_t`, `q_s = b²‖h‖²`, `q_t = a²u²`.
//! * `ChEx3`: `φ = D / (D² + q_s)^{3/2}`, same `D`, `q_s`, `q_t`.
//!
//! The two `Ch*` families are the nonseparable space-time covariances of
//! Cressie & Huang (1999), Examples 1 and 3, with two spatial dimensions.
//! The profile form is what the process-convolution kernel consumes: it
//! passes averaged Mahalanobis distances straight into `φ`.

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::point::SpatioTemporalPoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    SeAniso,
    ChEx1,
    ChEx3,
}

impl KernelFamily {
    /// `(φ, ∂φ/∂q_s, ∂φ/∂q_t)`.
    #[inline]
    pub fn profile(self, qs: f64, qt: f64) -> (f64, f64, f64) {
        match self {
            KernelFamily::SeAniso => {
                let v = (-0.5 * (qs + qt)).exp();
                (v, -0.5 * v, -0.5 * v)
            }
            KernelFamily::ChEx1 => {
                let d = 1.0 + qt;
                let v = (-qs / d).exp() / d;
                (v, -v / d, v * (qs / (d * d) - 1.0 / d))
            }
            KernelFamily::ChEx3 => {
                let d = 1.0 + qt;
                let e = d * d + qs;
                let e32 = e * e.sqrt();
                let e52 = e32 * e;
                (d / e32, -1.5 * d / e52, 1.0 / e32 - 3.0 * d * d / e52)
            }
        }
    }

    #[inline]
    pub fn profile_value(self, qs: f64, qt: f64) -> f64 {
        match self {
            KernelFamily::SeAniso => (-0.5 * (qs + qt)).exp(),
            KernelFamily::ChEx1 => {
                let d = 1.0 + qt;
                (-qs / d).exp() / d
            }
            KernelFamily::ChEx3 => {
                let d = 1.0 + qt;
                let e = d * d + qs;
                d / (e * e.sqrt())
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SeAniso => "se",
            KernelFamily::ChEx1 => "ch1",
            KernelFamily::ChEx3 => "ch3",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "se_aniso" => Ok(KernelFamily::SeAniso),
            "ch1" | "ch_ex1" | "ex1" => Ok(KernelFamily::ChEx1),
            "ch3" | "ch_ex3" | "ex3" => Ok(KernelFamily::ChEx3),
            other => Err(Error::Config(format!("unknown kernel family {other:?}"))),
        }
    }
}

/// Shape parameters of the base stationary kernel, stored as logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BaseKernelSpec {
    SeAniso { log_lengths: [f64; 3] },
    ChEx1 { log_a: f64, log_b: f64 },
    ChEx3 { log_a: f64, log_b: f64 },
}

fn checked_ln(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v.ln())
    } else {
        Err(Error::invalid(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl BaseKernelSpec {
    pub fn se(lx: f64, ly: f64, lt: f64) -> Result<Self> {
        Ok(BaseKernelSpec::SeAniso {
            log_lengths: [
                checked_ln("l_x", lx)?,
                checked_ln("l_y", ly)?,
                checked_ln("l_t", lt)?,
            ],
        })
    }

    pub fn ch_ex1(a: f64, b: f64) -> Result<Self> {
        Ok(BaseKernelSpec::ChEx1 {
            log_a: checked_ln("a", a)?,
            log_b: checked_ln("b", b)?,
        })
    }

    pub fn ch_ex3(a: f64, b: f64) -> Result<Self> {
        Ok(BaseKernelSpec::ChEx3 {
            log_a: checked_ln("a", a)?,
            log_b: checked_ln("b", b)?,
        })
    }

    /// Builds a spec of `family` whose implied per-axis length scales are
    /// `lengths`. The Cressie-Huang families are spatially isotropic, so
    /// the two spatial lengths are replaced by their geometric mean.
    pub fn from_lengths(family: KernelFamily, lengths: [f64; 3]) -> Result<Self> {
        match family {
            KernelFamily::SeAniso => Self::se(lengths[0], lengths[1], lengths[2]),
            KernelFamily::ChEx1 | KernelFamily::ChEx3 => {
                let ls = (lengths[0] * lengths[1]).sqrt();
                let (a, b) = (1.0 / lengths[2], 1.0 / ls);
                if family == KernelFamily::ChEx1 {
                    Self::ch_ex1(a, b)
                } else {
                    Self::ch_ex3(a, b)
                }
            }
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            BaseKernelSpec::SeAniso { .. } => KernelFamily::SeAniso,
            BaseKernelSpec::ChEx1 { .. } => KernelFamily::ChEx1,
            BaseKernelSpec::ChEx3 { .. } => KernelFamily::ChEx3,
        }
    }

    pub fn log_params(&self) -> Vec<f64> {
        match *self {
            BaseKernelSpec::SeAniso { log_lengths } => log_lengths.to_vec(),
            BaseKernelSpec::ChEx1 { log_a, log_b } | BaseKernelSpec::ChEx3 { log_a, log_b } => {
                vec![log_a, log_b]
            }
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            BaseKernelSpec::SeAniso { .. } => 3,
            _ => 2,
        }
    }

    pub fn with_log_params(&self, p: &[f64]) -> Self {
        assert_eq!(p.len(), self.n_params(), "base kernel parameter count");
        match self {
            BaseKernelSpec::SeAniso { .. } => BaseKernelSpec::SeAniso {
                log_lengths: [p[0], p[1], p[2]],
            },
            BaseKernelSpec::ChEx1 { .. } => BaseKernelSpec::ChEx1 {
                log_a: p[0],
                log_b: p[1],
            },
            BaseKernelSpec::ChEx3 { .. } => BaseKernelSpec::ChEx3 {
                log_a: p[0],
                log_b: p[1],
            },
        }
    }

    /// Per-axis weights `w` with `q_s = w₀dx² + w₁dy²`, `q_t = w₂dt²`.
    pub fn axis_weights(&self) -> [f64; 3] {
        match *self {
            BaseKernelSpec::SeAniso { log_lengths } => log_lengths.map(|l| (-2.0 * l).exp()),
            BaseKernelSpec::ChEx1 { log_a, log_b } | BaseKernelSpec::ChEx3 { log_a, log_b } => {
                let b2 = (2.0 * log_b).exp();
                [b2, b2, (2.0 * log_a).exp()]
            }
        }
    }

    /// Per-axis length scales implied by [`axis_weights`](Self::axis_weights).
    pub fn implied_lengths(&self) -> [f64; 3] {
        self.axis_weights().map(|w| 1.0 / w.sqrt())
    }
}

/// Global hyper-parameters of a data GP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalHypers {
    pub log_sigma_f: f64,
    /// `-inf` encodes a noiseless model.
    #[serde(with = "neg_inf_as_null")]
    pub log_sigma_n: f64,
    pub base: BaseKernelSpec,
    /// Latent length scale `l_l` of the LEIS construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_latent_length: Option<f64>,
}

impl GlobalHypers {
    pub fn new(sigma_f: f64, sigma_n: f64, base: BaseKernelSpec) -> Result<Self> {
        if !(sigma_n.is_finite() && sigma_n >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma_n must be finite and >= 0, got {sigma_n}"
            )));
        }
        Ok(Self {
            log_sigma_f: checked_ln("sigma_f", sigma_f)?,
            log_sigma_n: sigma_n.ln(),
            base,
            log_latent_length: None,
        })
    }

    pub fn with_latent_length(mut self, latent_length: f64) -> Result<Self> {
        self.log_latent_length = Some(checked_ln("latent length", latent_length)?);
        Ok(self)
    }

    pub fn sigma_f(&self) -> f64 {
        self.log_sigma_f.exp()
    }

    pub fn sigma_n(&self) -> f64 {
        self.log_sigma_n.exp()
    }

    pub fn latent_length(&self) -> Option<f64> {
        self.log_latent_length.map(f64::exp)
    }

    pub fn family(&self) -> KernelFamily {
        self.base.family()
    }

    pub fn kernel(&self) -> StationaryKernel {
        StationaryKernel::new(self.base, self.sigma_f())
    }
}

mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::NEG_INFINITY {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Anything that yields a covariance between two points.
pub trait CovFn {
    fn cov(&self, p: &SpatioTemporalPoint, q: &SpatioTemporalPoint) -> f64;
}

impl<F> CovFn for F
where
    F: Fn(&SpatioTemporalPoint, &SpatioTemporalPoint) -> f64,
{
    fn cov(&self, p: &SpatioTemporalPoint, q: &SpatioTemporalPoint) -> f64 {
        self(p, q)
    }
}

/// A stationary kernel with its parameters unpacked for fast evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryKernel {
    family: KernelFamily,
    sigma_f2: f64,
    weights: [f64; 3],
}

impl StationaryKernel {
    pub fn new(base: BaseKernelSpec, sigma_f: f64) -> Self {
        Self {
            family: base.family(),
            sigma_f2: sigma_f * sigma_f,
            weights: base.axis_weights(),
        }
    }

    /// Kernel with explicit per-axis weights `w` (`q_s = w₀dx² + w₁dy²`, `q_t = w₂dt²`).
    pub fn from_weights(family: KernelFamily, sigma_f: f64, weights: [f64; 3]) -> Self {
        Self {
            family,
            sigma_f2: sigma_f * sigma_f,
            weights,
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    pub fn variance(&self) -> f64 {
        self.sigma_f2
    }

    #[inline]
    pub(crate) fn scaled(&self, d: [f64; 3]) -> (f64, f64) {
        let w = &self.weights;
        (w[0] * d[0] * d[0] + w[1] * d[1] * d[1], w[2] * d[2] * d[2])
    }

    #[inline]
    pub fn eval(&self, p: &SpatioTemporalPoint, q: &SpatioTemporalPoint) -> f64 {
        let (qs, qt) = self.scaled(p.delta(q));
        self.sigma_f2 * self.family.profile_value(qs, qt)
    }

    /// Value and `∂k/∂ log w_axis` for each of the three axis weights.
    #[inline]
    pub(crate) fn eval_with_weight_grad(
        &self,
        p: &SpatioTemporalPoint,
        q: &SpatioTemporalPoint,
    ) -> (f64, [f64; 3]) {
        let d = p.delta(q);
        let w = &self.weights;
        let s = [w[0] * d[0] * d[0], w[1] * d[1] * d[1], w[2] * d[2] * d[2]];
        let (v, dqs, dqt) = self.family.profile(s[0] + s[1], s[2]);
        let a = self.sigma_f2;
        (a * v, [a * dqs * s[0], a * dqs * s[1], a * dqt * s[2]])
    }
}

impl CovFn for StationaryKernel {
    #[inline]
    fn cov(&self, p: &SpatioTemporalPoint, q: &SpatioTemporalPoint) -> f64 {
        self.eval(p, q)
    }
}

fn check_finite(p: &SpatioTemporalPoint, q: &SpatioTemporalPoint) -> Result<()> {
    if p.coords()
        .iter()
        .chain(q.coords().iter())
        .all(|v| v.is_finite())
    {
        Ok(())
    } else {
        Err(Error::invalid("non-finite point coordinate"))
    }
}

/// Anisotropic squared-exponential covariance `σ_f² exp(-½ dᵀΣ⁻¹d)`.
pub fn se_cov(p: &SpatioTemporalPoint, q: &SpatioTemporalPoint, h: &GlobalHypers) -> Result<f64> {
    check_finite(p, q)?;
    if h.family() != KernelFamily::SeAniso {
        return Err(Error::invalid(format!(
            "se_cov called with a {} kernel",
            h.family().name()
        )));
    }
    Ok(h.kernel().eval(p, q))
}

/// Nonseparable Cressie-Huang covariance (Example 1 or 3).
pub fn ch_cov(p: &SpatioTemporalPoint, q: &SpatioTemporalPoint, h: &GlobalHypers) -> Result<f64> {
    check_finite(p, q)?;
    if h.family() == KernelFamily::SeAniso {
        return Err(Error::invalid(
            "ch_cov called with a squared-exponential kernel",
        ));
    }
    Ok(h.kernel().eval(p, q))
}

/// `M[i][j] = k(a[i], b[j])`. When `a` and `b` are the same slice the upper
/// triangle is mirrored so the result is exactly symmetric.
pub fn cov_matrix<K: CovFn + ?Sized>(
    a: &[SpatioTemporalPoint],
    b: &[SpatioTemporalPoint],
    kfn: &K,
) -> Mat<f64> {
    if std::ptr::eq(a, b) {
        return cov_matrix_sym(a, kfn);
    }
    Mat::from_fn(a.len(), b.len(), |i, j| kfn.cov(&a[i], &b[j]))
}

pub fn cov_matrix_sym<K: CovFn + ?Sized>(a: &[SpatioTemporalPoint], kfn: &K) -> Mat<f64> {
    let n = a.len();
    let mut m = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let v = kfn.cov(&a[i], &a[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64, t: f64) -> SpatioTemporalPoint {
        SpatioTemporalPoint::new(x, y, t).unwrap()
    }

    fn se_hypers(sf: f64, l: [f64; 3]) -> GlobalHypers {
        GlobalHypers::new(sf, 0.0, BaseKernelSpec::se(l[0], l[1], l[2]).unwrap()).unwrap()
    }

    #[test]
    fn se_zero_distance_is_signal_variance() {
        let h = se_hypers(1.0, [0.3, 0.7, 2.0]);
        let p = pt(0.4, -0.2, 3.0);
        assert_eq!(se_cov(&p, &p, &h).unwrap(), 1.0);
    }

    #[test]
    fn se_unit_scaled_displacement() {
        let sf = 1.7;
        let h = se_hypers(sf, [0.3, 0.7, 2.0]);
        let v = se_cov(&pt(0.3, 1.0, 1.0), &pt(0.0, 1.0, 1.0), &h).unwrap();
        assert!((v - sf * sf * (-0.5f64).exp()).abs() < 1e-14);
        assert!((v / (sf * sf) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn se_matches_frozen_closed_form() {
        // Independent closed-form evaluation.
        let h = se_hypers(1.5, [1.0, 2.0, 0.5]);
        let v = se_cov(&pt(0.3, -1.2, 2.0), &pt(1.1, 0.4, 2.5), &h).unwrap();
        assert!((v - 0.719_592_799_086_683_6).abs() < 1e-14, "{v}");
    }

    #[test]
    fn wrong_family_is_rejected() {
        let se = se_hypers(1.0, [1.0; 3]);
        let ch = GlobalHypers::new(1.0, 0.0, BaseKernelSpec::ch_ex1(1.0, 1.0).unwrap()).unwrap();
        let p = pt(0.0, 0.0, 0.0);
        assert!(ch_cov(&p, &p, &se).is_err());
        assert!(se_cov(&p, &p, &ch).is_err());
    }

    const CH_POINTS: [[f64; 3]; 4] = [
        [0.0, 0.0, 0.0],
        [0.5, 0.2, 1.0],
        [-0.3, 0.8, 2.5],
        [1.0, -0.4, 0.5],
    ];

    // a = 0.7, b = 1.3, sigma = 1.2, evaluated independently from the closed forms.
    const CH_EX1: [[f64; 4]; 4] = [
        [
            1.44,
            0.695_545_269_309_589_4,
            0.261_627_005_140_411_3,
            0.223_716_864_508_987_42,
        ],
        [
            0.695_545_269_309_589_4,
            1.44,
            0.306_576_183_995_639_4,
            0.512_060_926_694_547_6,
        ],
        [
            0.261_627_005_140_411_3,
            0.306_576_183_995_639_4,
            1.44,
            0.081_462_949_818_004_23,
        ],
        [
            0.223_716_864_508_987_42,
            0.512_060_926_694_547_6,
            0.081_462_949_818_004_23,
            1.44,
        ],
    ];
    const CH_EX3: [[f64; 4]; 4] = [
        [
            1.44,
            0.480_891_110_589_916_4,
            0.078_309_301_678_377_81,
            0.279_693_807_148_248,
        ],
        [
            0.480_891_110_589_916_4,
            1.44,
            0.200_439_221_644_096_4,
            0.466_163_071_030_796,
        ],
        [
            0.078_309_301_678_377_81,
            0.200_439_221_644_096_4,
            1.44,
            0.080_924_391_754_527_8,
        ],
        [
            0.279_693_807_148_248,
            0.466_163_071_030_796,
            0.080_924_391_754_527_8,
            1.44,
        ],
    ];

    #[test]
    fn cressie_huang_matrices_match_frozen_values() {
        let pts: Vec<_> = CH_POINTS.iter().map(|c| pt(c[0], c[1], c[2])).collect();
        for (base, expected) in [
            (BaseKernelSpec::ch_ex1(0.7, 1.3).unwrap(), CH_EX1),
            (BaseKernelSpec::ch_ex3(0.7, 1.3).unwrap(), CH_EX3),
        ] {
            let h = GlobalHypers::new(1.2, 0.0, base).unwrap();
            let m = cov_matrix(
                &pts,
                &pts,
                &|p: &SpatioTemporalPoint, q: &SpatioTemporalPoint| ch_cov(p, q, &h).unwrap(),
            );
            for i in 0..4 {
                for j in 0..4 {
                    assert!((m[(i, j)] - expected[i][j]).abs() < 1e-13, "{i},{j}");
                }
            }
        }
    }

    #[test]
    fn ch_zero_lag_and_reflection() {
        let h = GlobalHypers::new(0.8, 0.0, BaseKernelSpec::ch_ex3(1.1, 0.4).unwrap()).unwrap();
        let p = pt(0.2, 0.1, 4.0);
        assert!((ch_cov(&p, &p, &h).unwrap() - 0.64).abs() < 1e-15);
        let q = pt(1.2, -0.4, 2.5);
        let a = ch_cov(&p, &q, &h).unwrap();
        let b = ch_cov(&q, &p, &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn profile_partials_match_finite_differences() {
        for fam in [
            KernelFamily::SeAniso,
            KernelFamily::ChEx1,
            KernelFamily::ChEx3,
        ] {
            for &(qs, qt) in &[(0.3, 0.2), (2.0, 0.01), (0.0, 1.5)] {
                let (_, ds, dt) = fam.profile(qs, qt);
                let e = 1e-6;
                let fs =
                    (fam.profile_value(qs + e, qt) - fam.profile_value(qs - e, qt)) / (2.0 * e);
                let ft =
                    (fam.profile_value(qs, qt + e) - fam.profile_value(qs, qt - e)) / (2.0 * e);
                assert!((ds - fs).abs() < 1e-8, "{fam:?} dqs");
                assert!((dt - ft).abs() < 1e-8, "{fam:?} dqt");
            }
        }
    }

    #[test]
    fn cov_matrix_shapes_and_symmetry() {
        let h = se_hypers(1.3, [0.5, 0.5, 1.0]);
        let k = h.kernel();
        let a = vec![pt(0.0, 0.0, 0.0)];
        let m = cov_matrix(&a, &a, &k);
        assert_eq!((m.nrows(), m.ncols()), (1, 1));
        assert!((m[(0, 0)] - 1.69).abs() < 1e-15);

        let b3 = vec![pt(0.0, 0.1, 0.0), pt(0.4, 0.2, 1.0), pt(-0.3, 0.0, 2.0)];
        let b2 = vec![pt(0.5, 0.5, 0.5), pt(0.1, -0.2, 1.5)];
        let m32 = cov_matrix(&b3, &b2, &k);
        let m23 = cov_matrix(&b2, &b3, &k);
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(m32[(i, j)], m23[(j, i)]);
            }
        }
    }

    #[test]
    fn weight_gradient_matches_finite_difference() {
        let base = BaseKernelSpec::ch_ex1(0.6, 1.4).unwrap();
        let k = StationaryKernel::new(base, 1.1);
        let (p, q) = (pt(0.1, 0.2, 0.0), pt(0.5, -0.1, 0.8));
        let (_, g) = k.eval_with_weight_grad(&p, &q);
        for axis in 0..3 {
            let e: f64 = 1e-6;
            let mut kp = k;
            kp.weights[axis] *= e.exp();
            let mut km = k;
            km.weights[axis] *= (-e).exp();
            let fd = (kp.eval(&p, &q) - km.eval(&p, &q)) / (2.0 * e);
            assert!((fd - g[axis]).abs() < 1e-8);
        }
    }
}
