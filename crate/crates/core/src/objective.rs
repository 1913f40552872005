//! The joint ML-II objective: data log marginal likelihood under the
//! nonstationary kernel, with local parameters taken from the latent
//! predictive means, plus the latent-GP log marginal likelihood of every
//! latent field. Values and analytic gradients in a flat parameter vector.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::factor::{add_diagonal, Factor};
use crate::gp::kernel::{cov_matrix, GlobalHypers, KernelFamily};
use crate::gp::point::ObservationSet;
use crate::gp::regression::gaussian_log_density;
use crate::latent::LatentField;
use crate::nonstationary::{check_fields, Local, NgpKind, NsKernel};

/// Which parameter blocks the optimizer may move. Blocks that do not exist
/// for a model (base-kernel shape under PCLSK, latent blocks for a
/// stationary model) are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeParams {
    pub sigma_f: bool,
    pub noise: bool,
    pub base: bool,
    pub latent_hypers: bool,
    pub latent_values: bool,
}

impl Default for FreeParams {
    fn default() -> Self {
        Self {
            sigma_f: true,
            noise: true,
            base: true,
            latent_hypers: true,
            latent_values: true,
        }
    }
}

impl FreeParams {
    pub fn only_sigma_f() -> Self {
        Self {
            sigma_f: true,
            noise: false,
            base: false,
            latent_hypers: false,
            latent_values: false,
        }
    }
}

/// `None` is the plain stationary model.
pub(crate) type ModelKind = Option<NgpKind>;

#[derive(Debug, Clone)]
struct FieldSlots {
    /// Start of `(log σ_fz, log l_x, log l_y, log l_t)`.
    theta: Option<usize>,
    /// Start of the free latent values, which begin at the frozen prefix.
    z: Option<usize>,
    z_start: usize,
}

/// Maps a flat parameter vector to model parameters and back.
#[derive(Debug, Clone)]
pub(crate) struct Problem<'a> {
    data: &'a ObservationSet,
    kind: ModelKind,
    globals: GlobalHypers,
    fields: Vec<LatentField>,
    sf: Option<usize>,
    noise: Option<usize>,
    /// Noise variance is `floor² + exp(2θ)` so it can never collapse to zero.
    noise_floor2: f64,
    base: Option<usize>,
    slots: Vec<FieldSlots>,
    dim: usize,
}

fn values_sd(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

impl<'a> Problem<'a> {
    pub(crate) fn new(
        data: &'a ObservationSet,
        kind: ModelKind,
        globals: GlobalHypers,
        fields: Vec<LatentField>,
        free: FreeParams,
    ) -> Result<Self> {
        match kind {
            None if !fields.is_empty() => {
                return Err(Error::invalid("stationary model takes no latent fields"))
            }
            Some(k) => {
                check_fields(k, &fields)?;
                NsKernel::new(k, &globals)?;
            }
            None => {}
        }
        let mut dim = 0;
        let mut take = |on: bool, n: usize| {
            on.then(|| {
                dim += n;
                dim - n
            })
        };
        let sf = take(free.sigma_f, 1);
        let sn = globals.sigma_n();
        let noise = take(free.noise && sn > 0.0, 1);
        let sd = values_sd(data.values());
        let floor = (if sd > 0.0 { 1e-3 * sd } else { 1e-3 }).min(0.5 * sn);
        let base = take(
            free.base && kind != Some(NgpKind::Pclsk),
            globals.base.n_params(),
        );
        let slots = fields
            .iter()
            .map(|f| {
                let theta = take(free.latent_hypers, 4);
                let nz = f.len() - f.frozen_prefix();
                let z = take(free.latent_values && nz > 0, nz);
                FieldSlots {
                    theta,
                    z,
                    z_start: f.frozen_prefix(),
                }
            })
            .collect();
        Ok(Self {
            data,
            kind,
            globals,
            fields,
            sf,
            noise,
            noise_floor2: floor * floor,
            base,
            slots,
            dim,
        })
    }

    /// Per-coordinate restart perturbation sd: `log_sd` for log-scale
    /// coordinates, `latent_sd · l_l` for LEIS latent coordinates.
    pub(crate) fn perturbation_scales(&self, log_sd: f64, latent_sd: f64) -> Vec<f64> {
        let mut s = vec![log_sd; self.dim];
        if self.kind == Some(NgpKind::Leis) {
            let ll = self.globals.latent_length().unwrap_or(1.0);
            for (f, slot) in self.fields.iter().zip(&self.slots) {
                if let Some(i) = slot.z {
                    let n = f.len() - slot.z_start;
                    s[i..i + n].fill(latent_sd * ll);
                }
            }
        }
        s
    }

    #[cfg(test)]
    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn pack(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        let g = &self.globals;
        if let Some(i) = self.sf {
            x[i] = g.log_sigma_f;
        }
        if let Some(i) = self.noise {
            x[i] = 0.5 * ((2.0 * g.log_sigma_n).exp() - self.noise_floor2).ln();
        }
        if let Some(i) = self.base {
            let p = g.base.log_params();
            x[i..i + p.len()].copy_from_slice(&p);
        }
        for (f, s) in self.fields.iter().zip(&self.slots) {
            if let Some(i) = s.theta {
                x[i] = f.hypers.log_sigma_f;
                x[i + 1..i + 4].copy_from_slice(&f.hypers.log_lengths);
            }
            if let Some(i) = s.z {
                let free = &f.values()[s.z_start..];
                x[i..i + free.len()].copy_from_slice(free);
            }
        }
        x
    }

    pub(crate) fn unpack(&self, x: &[f64]) -> (GlobalHypers, Vec<LatentField>) {
        assert_eq!(x.len(), self.dim);
        let mut g = self.globals;
        if let Some(i) = self.sf {
            g.log_sigma_f = x[i];
        }
        if let Some(i) = self.noise {
            g.log_sigma_n = 0.5 * (self.noise_floor2 + (2.0 * x[i]).exp()).ln();
        }
        if let Some(i) = self.base {
            g.base = g.base.with_log_params(&x[i..i + g.base.n_params()]);
        }
        let mut fields = self.fields.clone();
        for (f, s) in fields.iter_mut().zip(&self.slots) {
            if let Some(i) = s.theta {
                f.hypers.log_sigma_f = x[i];
                f.hypers.log_lengths.copy_from_slice(&x[i + 1..i + 4]);
            }
            if let Some(i) = s.z {
                for k in s.z_start..f.len() {
                    f.set_free_value(k, x[i + k - s.z_start]);
                }
            }
        }
        (g, fields)
    }

    /// Objective at `x`; `None` when a factorization fails or a value is not finite.
    pub(crate) fn value(&self, x: &[f64]) -> Option<f64> {
        let (g, fields) = self.unpack(x);
        evaluate(self.data, self.kind, &g, &fields, None).map(|e| e.total())
    }

    /// Objective and its gradient with respect to `x`.
    pub(crate) fn value_grad(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (g, fields) = self.unpack(x);
        let mut grads = RawGrad::new(&g, &fields);
        let e = evaluate(self.data, self.kind, &g, &fields, Some(&mut grads))?;
        let mut out = vec![0.0; self.dim];
        if let Some(i) = self.sf {
            out[i] = grads.log_sigma_f;
        }
        if let Some(i) = self.noise {
            out[i] = grads.noise_var * 2.0 * (2.0 * x[i]).exp();
        }
        if let Some(i) = self.base {
            let d = base_param_grads(g.family(), grads.log_weights);
            out[i..i + d.len()].copy_from_slice(&d);
        }
        for ((s, fg), f) in self.slots.iter().zip(&grads.fields).zip(&fields) {
            if let Some(i) = s.theta {
                out[i..i + 4].copy_from_slice(&fg.theta);
            }
            if let Some(i) = s.z {
                let n = f.len() - s.z_start;
                out[i..i + n].copy_from_slice(&fg.z[s.z_start..]);
            }
        }
        out.iter()
            .all(|v| v.is_finite())
            .then_some((e.total(), out))
    }
}

/// `∂/∂ log w` of the axis weights mapped to the base kernel's own log parameters.
fn base_param_grads(family: KernelFamily, dw: [f64; 3]) -> Vec<f64> {
    match family {
        // w = l⁻²
        KernelFamily::SeAniso => dw.iter().map(|d| -2.0 * d).collect(),
        // w = (b², b², a²), parameters (log a, log b)
        KernelFamily::ChEx1 | KernelFamily::ChEx3 => {
            vec![2.0 * dw[2], 2.0 * (dw[0] + dw[1])]
        }
    }
}

struct FieldGrad {
    theta: [f64; 4],
    z: Vec<f64>,
}

struct RawGrad {
    log_sigma_f: f64,
    noise_var: f64,
    log_weights: [f64; 3],
    fields: Vec<FieldGrad>,
}

impl RawGrad {
    fn new(_g: &GlobalHypers, fields: &[LatentField]) -> Self {
        Self {
            log_sigma_f: 0.0,
            noise_var: 0.0,
            log_weights: [0.0; 3],
            fields: fields
                .iter()
                .map(|f| FieldGrad {
                    theta: [0.0; 4],
                    z: vec![0.0; f.len()],
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Terms {
    pub data: f64,
    pub latent: f64,
}

impl Terms {
    pub(crate) fn total(&self) -> f64 {
        self.data + self.latent
    }
}

struct FieldEval {
    factor: Factor,
    beta: Vec<f64>,
    kqm: Mat<f64>,
    zq: Vec<f64>,
}

fn evaluate(
    data: &ObservationSet,
    kind: ModelKind,
    g: &GlobalHypers,
    fields: &[LatentField],
    grads: Option<&mut RawGrad>,
) -> Option<Terms> {
    let pts = data.points();
    let n = pts.len();
    let mut latent = 0.0;
    let mut evals = Vec::with_capacity(fields.len());
    for f in fields {
        let factor = Factor::new(&f.gram(), "latent GP").ok()?;
        let (lml, beta) = gaussian_log_density(&factor, f.values());
        latent += lml;
        let kqm = cov_matrix(pts, f.locations(), &f.hypers.kernel());
        let zq = (0..n)
            .map(|i| (0..f.len()).map(|a| kqm[(i, a)] * beta[a]).sum())
            .collect();
        evals.push(FieldEval {
            factor,
            beta,
            kqm,
            zq,
        });
    }
    let (kernel, locals): (NsKernel, Vec<Local>) = match kind {
        None => (NsKernel::stationary(g), vec![[0.0; 3]; n]),
        Some(NgpKind::Leis) => (
            NsKernel::new(NgpKind::Leis, g).ok()?,
            evals[0].zq.iter().map(|&l| [l, 0.0, 0.0]).collect(),
        ),
        Some(NgpKind::Pclsk) => (
            NsKernel::new(NgpKind::Pclsk, g).ok()?,
            (0..n)
                .map(|i| [0, 1, 2].map(|k| (2.0 * evals[k].zq[i]).exp()))
                .collect(),
        ),
    };
    if locals.iter().flatten().any(|v| !v.is_finite()) {
        return None;
    }
    let mut ky = kernel.matrix_sym(pts, &locals);
    let noise_var = (2.0 * g.log_sigma_n).exp();
    add_diagonal(&mut ky, noise_var);
    let factor = Factor::new(&ky, "joint objective").ok()?;
    let (data_lml, alpha) = gaussian_log_density(&factor, data.values());
    let terms = Terms {
        data: data_lml,
        latent,
    };
    if !terms.total().is_finite() {
        return None;
    }
    let Some(gr) = grads else {
        return Some(terms);
    };

    // d lml / dK = ½(ααᵀ − K_y⁻¹)
    let kinv = factor.inverse();
    let gm = |i: usize, j: usize| 0.5 * (alpha[i] * alpha[j] - kinv[(i, j)]);
    let mut dlocal = vec![[0.0; 3]; n];
    let mut dsf = 0.0;
    let mut dw = [0.0; 3];
    let mut dnoise = 0.0;
    for j in 0..n {
        for i in 0..=j {
            let gij = gm(i, j);
            let pg = kernel.eval_grad(&pts[i], &locals[i], &pts[j], &locals[j]);
            let w = if i == j { gij } else { 2.0 * gij };
            dsf += w * 2.0 * pg.k;
            for k in 0..3 {
                dw[k] += w * pg.dweights[k];
            }
            if i == j {
                dnoise += gij;
            } else {
                for k in 0..3 {
                    dlocal[i][k] += 2.0 * gij * pg.dlocal[k];
                    dlocal[j][k] += 2.0 * gij * pg.dlocal_q[k];
                }
            }
        }
    }
    gr.log_sigma_f = dsf;
    gr.log_weights = dw;
    gr.noise_var = dnoise;

    for (fi, (f, ev)) in fields.iter().zip(&evals).enumerate() {
        let m = f.len();
        let gf: Vec<f64> = (0..n).map(|i| dlocal[i][fi]).collect();
        let kt_g: Vec<f64> = (0..m)
            .map(|a| (0..n).map(|i| ev.kqm[(i, a)] * gf[i]).sum())
            .collect();
        let u = ev.factor.solve(&kt_g);
        let fg = &mut gr.fields[fi];
        for a in 0..m {
            fg.z[a] = u[a] - ev.beta[a];
        }
        let ainv = ev.factor.inverse();
        let jit2 = f.hypers.jitter().powi(2);
        let z = f.values();
        let beta = &ev.beta;

        // log σ_fz: every kernel entry scales by 2, the jitter does not.
        let kmm_beta: Vec<f64> = (0..m).map(|a| z[a] - jit2 * beta[a]).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let tr_ainv: f64 = (0..m).map(|a| ainv[(a, a)]).sum();
        fg.theta[0] = 2.0 * dot(&gf, &ev.zq) - 2.0 * dot(&u, &kmm_beta) + dot(beta, &kmm_beta)
            - (m as f64 - jit2 * tr_ainv);

        // log lengths: ∂k/∂log l = −2 ∂k/∂log w.
        let kern = f.hypers.kernel();
        let locs = f.locations();
        let mut dkqm_beta = vec![[0.0; 3]; n];
        for i in 0..n {
            for a in 0..m {
                let (_, c) = kern.eval_with_weight_grad(&pts[i], &locs[a]);
                for k in 0..3 {
                    dkqm_beta[i][k] += -2.0 * c[k] * beta[a];
                }
            }
        }
        let mut t = [0.0; 3];
        for a in 0..m {
            for b in 0..m {
                let (_, c) = kern.eval_with_weight_grad(&locs[a], &locs[b]);
                for k in 0..3 {
                    let d = -2.0 * c[k];
                    t[k] +=
                        -u[a] * d * beta[b] + 0.5 * beta[a] * d * beta[b] - 0.5 * ainv[(a, b)] * d;
                }
            }
        }
        for k in 0..3 {
            let data_part: f64 = (0..n).map(|i| gf[i] * dkqm_beta[i][k]).sum();
            fg.theta[1 + k] = data_part + t[k];
        }
    }
    Some(terms)
}

/// `log p(y | X, θ_y, z^m) + Σ latent_lml`. Factorization failures give `-inf`.
pub fn joint_objective(
    data: &ObservationSet,
    kind: NgpKind,
    globals: &GlobalHypers,
    fields: &[LatentField],
) -> Result<f64> {
    Ok(joint_objective_terms(data, kind, globals, fields)?
        .map_or(f64::NEG_INFINITY, |(a, b)| a + b))
}

/// The data and latent terms of [`joint_objective`] separately, `None` on
/// factorization failure.
pub fn joint_objective_terms(
    data: &ObservationSet,
    kind: NgpKind,
    globals: &GlobalHypers,
    fields: &[LatentField],
) -> Result<Option<(f64, f64)>> {
    check_fields(kind, fields)?;
    NsKernel::new(kind, globals)?;
    Ok(evaluate(data, Some(kind), globals, fields, None).map(|t| (t.data, t.latent)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::kernel::BaseKernelSpec;
    use crate::gp::point::SpatioTemporalPoint;
    use crate::gp::regression::log_marginal_likelihood;
    use crate::latent::LatentHypers;

    fn pt(x: f64, y: f64, t: f64) -> SpatioTemporalPoint {
        SpatioTemporalPoint::new(x, y, t).unwrap()
    }

    fn data() -> ObservationSet {
        let p = vec![
            pt(0.0, 0.0, 0.0),
            pt(0.5, 0.2, 1.0),
            pt(-0.3, 0.8, 2.0),
            pt(1.0, -0.4, 0.0),
            pt(0.2, 0.1, 1.0),
            pt(0.7, 0.6, 2.0),
        ];
        ObservationSet::new(p, vec![0.3, -1.0, 0.8, 1.4, -0.2, 0.5]).unwrap()
    }

    fn fields(kind: NgpKind, d: &ObservationSet, frozen: usize) -> Vec<LatentField> {
        let locs = vec![d.points()[0], d.points()[2], d.points()[4]];
        let lh = LatentHypers::new(0.9, [0.7, 0.9, 1.3], 1e-3).unwrap();
        let vals = [[0.2, -0.4, 0.3], [-0.1, 0.25, 0.1], [0.05, 0.15, -0.3]];
        (0..kind.n_fields())
            .map(|k| LatentField::new(locs.clone(), vals[k].to_vec(), lh, frozen).unwrap())
            .collect()
    }

    fn globals(kind: NgpKind, family: KernelFamily) -> GlobalHypers {
        let lengths = match kind {
            NgpKind::Pclsk => [1.0; 3],
            NgpKind::Leis => [0.8, 1.1, 1.6],
        };
        GlobalHypers::new(
            1.2,
            0.3,
            BaseKernelSpec::from_lengths(family, lengths).unwrap(),
        )
        .unwrap()
        .with_latent_length(0.8)
        .unwrap()
    }

    fn check_gradient(kind: ModelKind, family: KernelFamily) {
        let d = data();
        let k = kind.unwrap_or(NgpKind::Leis);
        let f = if kind.is_some() {
            fields(k, &d, 1)
        } else {
            vec![]
        };
        let p = Problem::new(&d, kind, globals(k, family), f, FreeParams::default()).unwrap();
        let x = p.pack();
        let (v, g) = p.value_grad(&x).unwrap();
        assert!((v - p.value(&x).unwrap()).abs() < 1e-12);
        for i in 0..x.len() {
            let h = 1e-5;
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (p.value(&up).unwrap() - p.value(&dn).unwrap()) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs()).max(1e-2);
            assert!(
                (fd - g[i]).abs() / scale < 1e-4,
                "{kind:?} {family:?} param {i}: fd {fd} analytic {}",
                g[i]
            );
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for fam in [
            KernelFamily::SeAniso,
            KernelFamily::ChEx1,
            KernelFamily::ChEx3,
        ] {
            check_gradient(None, fam);
            check_gradient(Some(NgpKind::Leis), fam);
            check_gradient(Some(NgpKind::Pclsk), fam);
        }
    }

    #[test]
    fn pack_unpack_round_trip() {
        let d = data();
        let g = globals(NgpKind::Leis, KernelFamily::ChEx3);
        let f = fields(NgpKind::Leis, &d, 1);
        let p = Problem::new(&d, Some(NgpKind::Leis), g, f.clone(), FreeParams::default()).unwrap();
        assert_eq!(p.dim(), 1 + 1 + 2 + 4 + 2);
        let (g2, f2) = p.unpack(&p.pack());
        assert!((g2.log_sigma_n - g.log_sigma_n).abs() < 1e-12);
        assert_eq!(g2.base, g.base);
        assert_eq!(f2, f);
    }

    #[test]
    fn zero_latent_leis_data_term_is_stationary_lml() {
        let d = data();
        let g = globals(NgpKind::Leis, KernelFamily::SeAniso);
        let mut f = fields(NgpKind::Leis, &d, 0);
        f[0] = LatentField::new(f[0].locations().to_vec(), vec![0.0; 3], f[0].hypers, 0).unwrap();
        let (data_term, _) = joint_objective_terms(&d, NgpKind::Leis, &g, &f)
            .unwrap()
            .unwrap();
        let st = log_marginal_likelihood(&d, &g.kernel(), g.sigma_n()).unwrap();
        assert_eq!(data_term, st);
    }

    #[test]
    fn objective_is_permutation_invariant() {
        let d = data();
        let g = globals(NgpKind::Pclsk, KernelFamily::ChEx1);
        let f = fields(NgpKind::Pclsk, &d, 0);
        let a = joint_objective(&d, NgpKind::Pclsk, &g, &f).unwrap();
        let perm = d.select(&[3, 1, 5, 0, 2, 4]);
        let b = joint_objective(&perm, NgpKind::Pclsk, &g, &f).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn wrong_field_count_is_an_error() {
        let d = data();
        let g = globals(NgpKind::Leis, KernelFamily::SeAniso);
        let f = fields(NgpKind::Pclsk, &d, 0);
        assert!(joint_objective(&d, NgpKind::Leis, &g, &f).is_err());
    }
}
