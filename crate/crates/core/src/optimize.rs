//! ML-II optimization: BFGS with a weak-Wolfe line search, restarted from
//! seeded perturbations of the initial point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::kernel::GlobalHypers;
use crate::gp::point::ObservationSet;
use crate::latent::LatentField;
use crate::nonstationary::NgpKind;
use crate::objective::{FreeParams, ModelKind, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Restart 0 starts at the initial point, the others at perturbations of it.
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once an iteration improves the objective by less than this, relatively.
    pub rel_tol: f64,
    /// Standard deviation of the Gaussian perturbation applied to restarts.
    pub perturb_sd: f64,
    /// Perturbation sd of LEIS latent coordinates, in units of `l_l`. These
    /// start at 0, where their gradient vanishes.
    pub latent_perturb_sd: f64,
    pub free: FreeParams,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            seed: 0,
            max_iter: 200,
            rel_tol: 1e-5,
            perturb_sd: 0.3,
            latent_perturb_sd: 1.0,
            free: FreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub globals: GlobalHypers,
    pub fields: Vec<LatentField>,
    pub objective: f64,
    /// Objective at the initial point.
    pub initial_objective: f64,
    /// Restarts whose starting point could not be evaluated.
    pub failed_restarts: usize,
    pub evaluations: usize,
}

pub(crate) struct Run {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
}

/// Maximizes `f` by BFGS on `-f`. `f` returns `None` where it is undefined,
/// which the line search treats as an infinitely bad point.
pub(crate) fn bfgs_maximize<F>(f: F, x0: Vec<f64>, max_iter: usize, rel_tol: f64) -> Option<Run>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut evals = 1;
    let (v0, g0) = f(&x0)?;
    // Minimize h = -f.
    let mut x = x0;
    let mut h = -v0;
    let mut g: Vec<f64> = g0.iter().map(|v| -v).collect();
    if n == 0 {
        return Some(Run { x, f: -h, evals });
    }
    let mut hinv = identity(n);
    let mut scaled = false;
    for _ in 0..max_iter {
        let mut p = mat_vec(&hinv, &g, -1.0);
        let mut slope = dot(&g, &p);
        if slope.is_nan() || slope >= 0.0 {
            hinv = identity(n);
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
            if slope.is_nan() || slope >= 0.0 {
                break;
            }
        }
        // Keep the trial step inside a box of half-width 2 in parameter space.
        let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = if pmax > 2.0 { 2.0 / pmax } else { 1.0 };
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut accepted: Option<(f64, Vec<f64>, f64, Vec<f64>)> = None;
        let mut best_lo: Option<(f64, Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..40 {
            let xt: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            evals += 1;
            match f(&xt) {
                Some((vt, gt)) if -vt <= h + 1e-4 * step * slope => {
                    let gt: Vec<f64> = gt.iter().map(|v| -v).collect();
                    if dot(&gt, &p) < 0.9 * slope {
                        lo = step;
                        best_lo = Some((step, xt, -vt, gt));
                    } else {
                        accepted = Some((step, xt, -vt, gt));
                        break;
                    }
                }
                _ => hi = step,
            }
            step = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * lo
            };
            if hi.is_finite() && hi - lo < 1e-12 * (1.0 + lo) {
                break;
            }
        }
        let Some((step, xt, ht, gt)) = accepted.or(best_lo) else {
            break;
        };
        let s: Vec<f64> = p.iter().map(|v| step * v).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let improvement = h - ht;
        x = xt;
        g = gt;
        let prev = h;
        h = ht;
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                let gamma = sy / dot(&y, &y);
                for i in 0..n {
                    hinv[i][i] = gamma;
                }
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        if improvement < rel_tol * prev.abs().max(1.0) {
            break;
        }
        if g.iter().all(|v| v.abs() < 1e-10) {
            break;
        }
    }
    Some(Run { x, f: -h, evals })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64], scale: f64) -> Vec<f64> {
    m.iter().map(|row| scale * dot(row, v)).collect()
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, 1.0);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn multi_start(
    problem: &Problem<'_>,
    opts: &OptimizeOptions,
) -> Result<(Vec<f64>, f64, f64, usize, usize)> {
    let x0 = problem.pack();
    let f0 = problem.value(&x0).unwrap_or(f64::NEG_INFINITY);
    let scales = problem.perturbation_scales(opts.perturb_sd, opts.latent_perturb_sd);
    let starts: Vec<Vec<f64>> = (0..opts.restarts.max(1))
        .map(|r| {
            if r == 0 {
                return x0.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            x0.iter()
                .zip(&scales)
                .map(|(v, s)| v + s * normal.sample(&mut rng))
                .collect()
        })
        .collect();
    let runs: Vec<Option<Run>> = starts
        .into_par_iter()
        .map(|x| bfgs_maximize(|x| problem.value_grad(x), x, opts.max_iter, opts.rel_tol))
        .collect();
    let failed = runs.iter().filter(|r| r.is_none()).count();
    let evals = runs.iter().flatten().map(|r| r.evals).sum();
    let mut best: Option<Run> = None;
    for r in runs.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| r.f > b.f) {
            best = Some(r);
        }
    }
    match best {
        Some(b) if b.f > f0 => Ok((b.x, b.f, f0, failed, evals)),
        _ if f0.is_finite() => Ok((x0, f0, f0, failed, evals)),
        _ => Err(Error::Optimization(format!(
            "all {} restarts failed to evaluate the objective",
            opts.restarts.max(1)
        ))),
    }
}

pub(crate) fn optimize_model(
    data: &ObservationSet,
    kind: ModelKind,
    globals: GlobalHypers,
    fields: Vec<LatentField>,
    opts: &OptimizeOptions,
) -> Result<Optimum> {
    if ![opts.perturb_sd, opts.latent_perturb_sd]
        .iter()
        .all(|s| s.is_finite() && *s >= 0.0)
    {
        return Err(Error::invalid("perturbation sd must be finite and >= 0"));
    }
    let problem = Problem::new(data, kind, globals, fields.clone(), opts.free)?;
    let (x, f, f0, failed, evals) = multi_start(&problem, opts)?;
    // Returning the inputs untouched when nothing improved keeps frozen and
    // unimproved parameters bit-identical.
    let (g, fl) = if f > f0 {
        problem.unpack(&x)
    } else {
        (globals, fields)
    };
    Ok(Optimum {
        globals: g,
        fields: fl,
        objective: f,
        initial_objective: f0,
        failed_restarts: failed,
        evaluations: evals,
    })
}

/// Maximizes the joint objective over the free global hyper-parameters,
/// latent hyper-parameters and non-frozen latent values.
pub fn joint_optimize(
    data: &ObservationSet,
    kind: NgpKind,
    globals: GlobalHypers,
    fields: Vec<LatentField>,
    opts: &OptimizeOptions,
) -> Result<Optimum> {
    optimize_model(data, Some(kind), globals, fields, opts)
}

/// ML-II fit of a stationary GP.
pub fn stationary_optimize(
    data: &ObservationSet,
    init: GlobalHypers,
    opts: &OptimizeOptions,
) -> Result<Optimum> {
    optimize_model(data, None, init, Vec::new(), opts)
}
