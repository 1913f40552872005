//! Nonstationary covariances built from a base stationary kernel and local
//! hyper-parameters: process convolution with local smoothing kernels
//! (PCLSK) and latent extension of the input space (LEIS).

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::factor::add_diagonal;
use crate::gp::kernel::{cov_matrix, BaseKernelSpec, GlobalHypers, KernelFamily};
use crate::gp::point::{ObservationSet, SpatioTemporalPoint};
use crate::gp::regression::{condition_marginals, Prediction};
use crate::latent::LatentField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgpKind {
    Pclsk,
    Leis,
}

impl NgpKind {
    /// Number of latent fields: one per local length scale, or one coordinate.
    pub fn n_fields(self) -> usize {
        match self {
            NgpKind::Pclsk => 3,
            NgpKind::Leis => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NgpKind::Pclsk => "pclsk",
            NgpKind::Leis => "leis",
        }
    }
}

impl std::str::FromStr for NgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pclsk" => Ok(NgpKind::Pclsk),
            "leis" => Ok(NgpKind::Leis),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Local hyper-parameters attached to a list of points.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalParams {
    /// Per-point `(log l_x, log l_y, log l_t)`.
    Pclsk(Vec<[f64; 3]>),
    /// Per-point latent coordinate.
    Leis(Vec<f64>),
}

impl LocalParams {
    pub fn kind(&self) -> NgpKind {
        match self {
            LocalParams::Pclsk(_) => NgpKind::Pclsk,
            LocalParams::Leis(_) => NgpKind::Leis,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            LocalParams::Pclsk(v) => v.len(),
            LocalParams::Leis(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The packed per-point form consumed by [`NsKernel`].
    pub(crate) fn packed(&self) -> Vec<Local> {
        match self {
            LocalParams::Pclsk(v) => v.iter().map(|l| l.map(|x| (2.0 * x).exp())).collect(),
            LocalParams::Leis(v) => v.iter().map(|&l| [l, 0.0, 0.0]).collect(),
        }
    }
}

/// Packed local parameters: squared lengths for PCLSK, `[l, 0, 0]` for LEIS.
pub(crate) type Local = [f64; 3];

/// A nonstationary kernel with everything but the local parameters fixed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NsKernel {
    kind: NgpKind,
    family: KernelFamily,
    sigma_f2: f64,
    /// Base axis weights; PCLSK ignores them (unit base scales).
    weights: [f64; 3],
    inv_ll2: f64,
}

/// One kernel entry with its derivatives.
pub(crate) struct PairGrad {
    pub k: f64,
    /// `∂k/∂(local of the first point)`: per log length for PCLSK, index 0 for LEIS.
    pub dlocal: [f64; 3],
    /// Same for the second point.
    pub dlocal_q: [f64; 3],
    /// `∂k/∂ log w` of the base axis weights (LEIS only).
    pub dweights: [f64; 3],
}

impl NsKernel {
    pub(crate) fn new(kind: NgpKind, h: &GlobalHypers) -> Result<Self> {
        let inv_ll2 = match kind {
            NgpKind::Pclsk => 0.0,
            NgpKind::Leis => {
                let ll = h
                    .latent_length()
                    .ok_or_else(|| Error::invalid("LEIS model requires a latent length scale"))?;
                1.0 / (ll * ll)
            }
        };
        Ok(Self {
            kind,
            family: h.family(),
            sigma_f2: (2.0 * h.log_sigma_f).exp(),
            weights: h.base.axis_weights(),
            inv_ll2,
        })
    }

    /// The base kernel alone, written as LEIS with an infinite latent length.
    pub(crate) fn stationary(h: &GlobalHypers) -> Self {
        Self {
            kind: NgpKind::Leis,
            family: h.family(),
            sigma_f2: (2.0 * h.log_sigma_f).exp(),
            weights: h.base.axis_weights(),
            inv_ll2: 0.0,
        }
    }

    #[inline]
    pub(crate) fn eval(
        &self,
        p: &SpatioTemporalPoint,
        lp: &Local,
        q: &SpatioTemporalPoint,
        lq: &Local,
    ) -> f64 {
        let d = p.delta(q);
        match self.kind {
            NgpKind::Pclsk => pclsk_raw(self.family, self.sigma_f2, d, lp, lq),
            NgpKind::Leis => {
                let w = &self.weights;
                let qs = w[0] * d[0] * d[0] + w[1] * d[1] * d[1];
                let qt = w[2] * d[2] * d[2];
                let dl = lp[0] - lq[0];
                self.sigma_f2
                    * self.family.profile_value(qs, qt)
                    * (-0.5 * dl * dl * self.inv_ll2).exp()
            }
        }
    }

    pub(crate) fn eval_grad(
        &self,
        p: &SpatioTemporalPoint,
        lp: &Local,
        q: &SpatioTemporalPoint,
        lq: &Local,
    ) -> PairGrad {
        let d = p.delta(q);
        match self.kind {
            NgpKind::Pclsk => {
                let mut pref = 1.0;
                let mut qk = [0.0; 3];
                for k in 0..3 {
                    let avg = 0.5 * (lp[k] + lq[k]);
                    pref *= ((lp[k] * lq[k]).sqrt() / avg).sqrt();
                    qk[k] = d[k] * d[k] / avg;
                }
                let (v, dqs, dqt) = self.family.profile(qk[0] + qk[1], qk[2]);
                let amp = self.sigma_f2 * pref;
                let k = amp * v;
                let mut dlocal = [0.0; 3];
                let mut dlocal_q = [0.0; 3];
                for a in 0..3 {
                    let (si, sj) = (lp[a], lq[a]);
                    let dphi = amp * if a < 2 { dqs } else { dqt } * qk[a] * 2.0 / (si + sj);
                    let half = k * (sj - si) / (2.0 * (si + sj));
                    dlocal[a] = half - dphi * si;
                    dlocal_q[a] = -half - dphi * sj;
                }
                PairGrad {
                    k,
                    dlocal,
                    dlocal_q,
                    dweights: [0.0; 3],
                }
            }
            NgpKind::Leis => {
                let w = &self.weights;
                let s = [w[0] * d[0] * d[0], w[1] * d[1] * d[1], w[2] * d[2] * d[2]];
                let (v, dqs, dqt) = self.family.profile(s[0] + s[1], s[2]);
                let dl = lp[0] - lq[0];
                let amp = self.sigma_f2 * (-0.5 * dl * dl * self.inv_ll2).exp();
                let k = amp * v;
                let dk = -k * dl * self.inv_ll2;
                PairGrad {
                    k,
                    dlocal: [dk, 0.0, 0.0],
                    dlocal_q: [-dk, 0.0, 0.0],
                    dweights: [amp * dqs * s[0], amp * dqs * s[1], amp * dqt * s[2]],
                }
            }
        }
    }

    pub(crate) fn matrix(
        &self,
        a: &[SpatioTemporalPoint],
        la: &[Local],
        b: &[SpatioTemporalPoint],
        lb: &[Local],
    ) -> Mat<f64> {
        Mat::from_fn(a.len(), b.len(), |i, j| {
            self.eval(&a[i], &la[i], &b[j], &lb[j])
        })
    }

    pub(crate) fn matrix_sym(&self, a: &[SpatioTemporalPoint], la: &[Local]) -> Mat<f64> {
        let n = a.len();
        let mut m = Mat::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = self.eval(&a[i], &la[i], &a[j], &la[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

#[inline]
fn pclsk_raw(family: KernelFamily, sigma_f2: f64, d: [f64; 3], si: &Local, sj: &Local) -> f64 {
    let mut pref = 1.0;
    let mut q = [0.0; 3];
    for k in 0..3 {
        let avg = 0.5 * (si[k] + sj[k]);
        pref *= ((si[k] * sj[k]).sqrt() / avg).sqrt();
        q[k] = d[k] * d[k] / avg;
    }
    sigma_f2 * pref * family.profile_value(q[0] + q[1], q[2])
}

/// PCLSK covariance between `p` and `q` with local diagonal kernel matrices
/// `Σ_p = diag(sp)`, `Σ_q = diag(sq)` (squared length scales). The base
/// profile is evaluated at averaged Mahalanobis distances with unit scales.
pub fn pclsk_cov(
    p: &SpatioTemporalPoint,
    q: &SpatioTemporalPoint,
    sp: [f64; 3],
    sq: [f64; 3],
    family: KernelFamily,
    sigma_f: f64,
) -> Result<f64> {
    if sp.iter().chain(&sq).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid(format!(
            "local kernel matrices must be positive: {sp:?}, {sq:?}"
        )));
    }
    Ok(pclsk_raw(family, sigma_f * sigma_f, p.delta(q), &sp, &sq))
}

/// LEIS covariance: the base kernel times `exp(-½((lp - lq)/l_l)²)`.
pub fn leis_cov(
    p: &SpatioTemporalPoint,
    q: &SpatioTemporalPoint,
    lp: f64,
    lq: f64,
    h: &GlobalHypers,
) -> Result<f64> {
    if !(lp.is_finite() && lq.is_finite()) {
        return Err(Error::invalid("non-finite latent coordinate"));
    }
    let k = NsKernel::new(NgpKind::Leis, h)?;
    Ok(k.eval(p, &[lp, 0.0, 0.0], q, &[lq, 0.0, 0.0]))
}

/// A nonstationary GP: global hyper-parameters plus the latent fields that
/// supply local hyper-parameters everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FittedNgpRaw")]
pub struct FittedNgp {
    kind: NgpKind,
    globals: GlobalHypers,
    fields: Vec<LatentField>,
}

#[derive(Deserialize)]
struct FittedNgpRaw {
    kind: NgpKind,
    globals: GlobalHypers,
    fields: Vec<LatentField>,
}

impl TryFrom<FittedNgpRaw> for FittedNgp {
    type Error = Error;

    fn try_from(r: FittedNgpRaw) -> Result<Self> {
        Self::new(r.kind, r.globals, r.fields)
    }
}

impl FittedNgp {
    pub fn new(kind: NgpKind, globals: GlobalHypers, fields: Vec<LatentField>) -> Result<Self> {
        check_fields(kind, &fields)?;
        if kind == NgpKind::Leis && globals.log_latent_length.is_none() {
            return Err(Error::invalid("LEIS model requires a latent length scale"));
        }
        Ok(Self {
            kind,
            globals,
            fields,
        })
    }

    pub fn kind(&self) -> NgpKind {
        self.kind
    }

    pub fn globals(&self) -> &GlobalHypers {
        &self.globals
    }

    pub fn fields(&self) -> &[LatentField] {
        &self.fields
    }

    /// Shared latent locations `X_M`.
    pub fn latent_locations(&self) -> &[SpatioTemporalPoint] {
        self.fields[0].locations()
    }

    /// Local parameters at `xq`, inferred as latent predictive means.
    pub fn local_params(&self, xq: &[SpatioTemporalPoint]) -> Result<LocalParams> {
        let mut per_field = Vec::with_capacity(self.fields.len());
        for f in &self.fields {
            per_field.push(f.predictor()?.predict(xq));
        }
        Ok(match self.kind {
            NgpKind::Leis => LocalParams::Leis(per_field.pop().unwrap()),
            NgpKind::Pclsk => LocalParams::Pclsk(
                (0..xq.len())
                    .map(|i| [per_field[0][i], per_field[1][i], per_field[2][i]])
                    .collect(),
            ),
        })
    }

    pub(crate) fn ns_kernel(&self) -> Result<NsKernel> {
        NsKernel::new(self.kind, &self.globals)
    }

    pub(crate) fn packed_locals(&self, xq: &[SpatioTemporalPoint]) -> Result<Vec<Local>> {
        Ok(self.local_params(xq)?.packed())
    }
}

pub(crate) fn check_fields(kind: NgpKind, fields: &[LatentField]) -> Result<()> {
    if fields.len() != kind.n_fields() {
        return Err(Error::invalid(format!(
            "{} model needs {} latent fields, got {}",
            kind.name(),
            kind.n_fields(),
            fields.len()
        )));
    }
    let locs = fields[0].locations();
    if fields[1..].iter().any(|f| f.locations() != locs) {
        return Err(Error::invalid("latent fields must share latent locations"));
    }
    Ok(())
}

/// Covariance matrix of the model between `a` and `b`. Local parameters are
/// inferred once per point list.
pub fn ngp_cov_matrix(
    model: &FittedNgp,
    a: &[SpatioTemporalPoint],
    b: &[SpatioTemporalPoint],
) -> Result<Mat<f64>> {
    let k = model.ns_kernel()?;
    let la = model.packed_locals(a)?;
    if std::ptr::eq(a, b) {
        return Ok(k.matrix_sym(a, &la));
    }
    let lb = model.packed_locals(b)?;
    Ok(k.matrix(a, &la, b, &lb))
}

/// Pointwise posterior under the nonstationary kernel, conditioned on `cond`.
pub fn ngp_predict(
    model: &FittedNgp,
    cond: &ObservationSet,
    xq: &[SpatioTemporalPoint],
) -> Result<Prediction> {
    predict_with(model, cond, xq)
}

/// A covariance function together with its observation noise.
pub trait CovarianceModel: Sync {
    fn noise_sd(&self) -> f64;
    fn cov_matrix(&self, a: &[SpatioTemporalPoint], b: &[SpatioTemporalPoint]) -> Result<Mat<f64>>;
    fn cov_matrix_sym(&self, a: &[SpatioTemporalPoint]) -> Result<Mat<f64>> {
        self.cov_matrix(a, a)
    }
    fn prior_variance(&self, a: &[SpatioTemporalPoint]) -> Vec<f64>;
}

impl CovarianceModel for GlobalHypers {
    fn noise_sd(&self) -> f64 {
        self.sigma_n()
    }

    fn cov_matrix(&self, a: &[SpatioTemporalPoint], b: &[SpatioTemporalPoint]) -> Result<Mat<f64>> {
        Ok(cov_matrix(a, b, &self.kernel()))
    }

    fn prior_variance(&self, a: &[SpatioTemporalPoint]) -> Vec<f64> {
        vec![self.kernel().variance(); a.len()]
    }
}

impl CovarianceModel for FittedNgp {
    fn noise_sd(&self) -> f64 {
        self.globals.sigma_n()
    }

    fn cov_matrix(&self, a: &[SpatioTemporalPoint], b: &[SpatioTemporalPoint]) -> Result<Mat<f64>> {
        ngp_cov_matrix(self, a, b)
    }

    fn prior_variance(&self, a: &[SpatioTemporalPoint]) -> Vec<f64> {
        vec![self.globals.kernel().variance(); a.len()]
    }
}

/// Pointwise posterior of any covariance model.
pub fn predict_with<M: CovarianceModel + ?Sized>(
    model: &M,
    cond: &ObservationSet,
    xq: &[SpatioTemporalPoint],
) -> Result<Prediction> {
    let prior = model.prior_variance(xq);
    if cond.is_empty() {
        return condition_marginals(&Mat::zeros(0, 0), &Mat::zeros(0, xq.len()), &prior, &[]);
    }
    let mut ky = model.cov_matrix_sym(cond.points())?;
    let sn = model.noise_sd();
    add_diagonal(&mut ky, sn * sn);
    let kxq = model.cov_matrix(cond.points(), xq)?;
    condition_marginals(&ky, &kxq, &prior, cond.values())
}

/// Base spec with unit scales, as used inside PCLSK.
pub(crate) fn unit_base(family: KernelFamily) -> BaseKernelSpec {
    BaseKernelSpec::from_lengths(family, [1.0; 3]).expect("unit lengths are valid")
}
