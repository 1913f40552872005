//! The adaptive loop: fit a stationary GP, choose an initial set of latent
//! locations by mutual information, learn the nonstationary model jointly,
//! then repeatedly add more latent locations and relearn with the earlier
//! latent values held fixed.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::kernel::{BaseKernelSpec, GlobalHypers, KernelFamily};
use crate::gp::point::{bounds, ObservationSet, SpatioTemporalPoint};
use crate::gp::regression::Prediction;
use crate::latent::{LatentField, LatentHypers, DEFAULT_LATENT_JITTER};
use crate::nonstationary::{ngp_predict, unit_base, FittedNgp, NgpKind};
use crate::objective::FreeParams;
use crate::optimize::{joint_optimize, stationary_optimize, OptimizeOptions, Optimum};
use crate::selection::{greedy_mi_select, SelectionProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LisalConfig {
    pub m1: usize,
    pub m2: usize,
    pub c: usize,
    pub kind: NgpKind,
    pub family: KernelFamily,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub perturb_sd: f64,
    pub latent_perturb_sd: f64,
    /// LEIS latent length scale `l_l`; held fixed.
    pub latent_length: f64,
    pub latent_jitter: f64,
}

impl Default for LisalConfig {
    fn default() -> Self {
        let o = OptimizeOptions::default();
        Self {
            m1: 6,
            m2: 6,
            c: 4,
            kind: NgpKind::Leis,
            family: KernelFamily::SeAniso,
            seed: 0,
            restarts: o.restarts,
            max_iter: o.max_iter,
            rel_tol: o.rel_tol,
            perturb_sd: o.perturb_sd,
            latent_perturb_sd: o.latent_perturb_sd,
            latent_length: 1.0,
            latent_jitter: DEFAULT_LATENT_JITTER,
        }
    }
}

impl LisalConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(Error::Config("m1 and m2 must be at least 1".into()));
        }
        if self.m1 + self.c * self.m2 > n {
            return Err(Error::Config(format!(
                "m1 + c·m2 = {} exceeds {n} training points",
                self.m1 + self.c * self.m2
            )));
        }
        if self.restarts == 0 || self.max_iter == 0 {
            return Err(Error::Config(
                "restarts and max_iter must be at least 1".into(),
            ));
        }
        for (name, v) in [
            ("latent_length", self.latent_length),
            ("latent_jitter", self.latent_jitter),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0")));
            }
        }
        if !(self.rel_tol.is_finite() && self.rel_tol >= 0.0)
            || ![self.perturb_sd, self.latent_perturb_sd]
                .iter()
                .all(|s| s.is_finite() && *s >= 0.0)
        {
            return Err(Error::Config(
                "rel_tol, perturb_sd and latent_perturb_sd must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    fn optimize_options(&self, stage: u64) -> OptimizeOptions {
        OptimizeOptions {
            restarts: self.restarts,
            seed: self.seed.wrapping_add(stage.wrapping_mul(1_000_003)),
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            perturb_sd: self.perturb_sd,
            latent_perturb_sd: self.latent_perturb_sd,
            ..OptimizeOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Training indices that became latent locations in this iteration.
    pub selected: Vec<usize>,
    pub objective: f64,
    pub globals: GlobalHypers,
    pub latent_hypers: Vec<LatentHypers>,
    pub model: FittedNgp,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LisalTrace {
    pub stationary: GlobalHypers,
    pub stationary_objective: f64,
    pub stationary_seconds: f64,
    pub iterations: Vec<IterationRecord>,
}

impl LisalTrace {
    /// Cumulative latent-location indices after each iteration.
    pub fn latent_indices(&self) -> Vec<usize> {
        self.iterations
            .iter()
            .flat_map(|r| r.selected.iter().copied())
            .collect()
    }

    /// Copy with all wall-clock fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        t.stationary_seconds = 0.0;
        for r in &mut t.iterations {
            r.seconds = 0.0;
        }
        t
    }
}

/// A failed run: the error plus whatever iterations completed.
#[derive(Debug)]
pub struct LisalFailure {
    pub error: Error,
    pub trace: Option<Box<LisalTrace>>,
}

impl From<LisalFailure> for Error {
    fn from(f: LisalFailure) -> Self {
        f.error
    }
}

fn extent_lengths(points: &[SpatioTemporalPoint], frac: f64) -> [f64; 3] {
    match bounds(points) {
        None => [1.0; 3],
        Some(b) => b.map(|(lo, hi)| {
            let e = hi - lo;
            if e > 0.0 {
                frac * e
            } else {
                1.0
            }
        }),
    }
}

fn sd(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Initial stationary hyper-parameters: lengths at half the domain extent,
/// signal sd from the data, noise at a tenth of it.
pub fn stationary_init(data: &ObservationSet, family: KernelFamily) -> Result<GlobalHypers> {
    let s = sd(data.values());
    let s = if s > 0.0 { s } else { 1.0 };
    let base = BaseKernelSpec::from_lengths(family, extent_lengths(data.points(), 0.5))?;
    GlobalHypers::new(s, 0.1 * s, base)
}

/// ML-II fit of the stationary base kernel; returns the hyper-parameters and lml.
pub fn fit_stationary(
    data: &ObservationSet,
    family: KernelFamily,
    opts: &OptimizeOptions,
) -> Result<(GlobalHypers, f64)> {
    if data.len() < 2 {
        return Err(Error::invalid(
            "stationary fit needs at least 2 observations",
        ));
    }
    let o = stationary_optimize(data, stationary_init(data, family)?, opts)?;
    Ok((o.globals, o.objective))
}

fn latent_hypers_init(data: &ObservationSet, jitter: f64) -> Result<LatentHypers> {
    LatentHypers::new(1.0, extent_lengths(data.points(), 0.5), jitter)
}

/// Runs the full adaptive loop and returns the final model and its trace.
pub fn lisal_fit(
    data: &ObservationSet,
    cfg: &LisalConfig,
) -> std::result::Result<(FittedNgp, LisalTrace), LisalFailure> {
    let fail = |error: Error, trace: Option<LisalTrace>| LisalFailure {
        error,
        trace: trace.map(Box::new),
    };
    cfg.validate(data.len()).map_err(|e| fail(e, None))?;
    let pts = data.points();

    let t0 = Instant::now();
    let (theta0, obj0) = fit_stationary(data, cfg.family, &cfg.optimize_options(0))
        .map_err(|e| fail(e.in_stage("stationary fit"), None))?;
    let mut trace = LisalTrace {
        stationary: theta0,
        stationary_objective: obj0,
        stationary_seconds: t0.elapsed().as_secs_f64(),
        iterations: Vec::new(),
    };

    let t1 = Instant::now();
    let first =
        SelectionProblem::from_kernel(pts, &theta0.kernel(), theta0.sigma_n(), vec![], cfg.m1)
            .and_then(|p| greedy_mi_select(&p))
            .map_err(|e| fail(e.in_stage("initial latent selection"), Some(trace.clone())))?;
    let locs: Vec<SpatioTemporalPoint> = first.iter().map(|&i| pts[i]).collect();
    let lh = latent_hypers_init(data, cfg.latent_jitter).map_err(|e| fail(e, None))?;
    let (globals, fields) = match cfg.kind {
        NgpKind::Leis => {
            let g = theta0
                .with_latent_length(cfg.latent_length)
                .map_err(|e| fail(e, None))?;
            let f = LatentField::new(locs, vec![0.0; cfg.m1], lh, 0).map_err(|e| fail(e, None))?;
            (g, vec![f])
        }
        NgpKind::Pclsk => {
            let mut g = theta0;
            g.base = unit_base(cfg.family);
            let lengths = theta0.base.implied_lengths();
            let f = (0..3)
                .map(|k| LatentField::new(locs.clone(), vec![lengths[k].ln(); cfg.m1], lh, 0))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| fail(e, None))?;
            (g, f)
        }
    };
    let opt = learn(data, cfg.kind, globals, fields, &cfg.optimize_options(1))
        .map_err(|e| fail(e.in_stage("iteration 0 optimization"), Some(trace.clone())))?;
    let mut model = FittedNgp::new(cfg.kind, opt.globals, opt.fields).map_err(|e| fail(e, None))?;
    trace
        .iterations
        .push(record(0, first.clone(), opt.objective, &model, t1));
    let mut chosen = first;

    for it in 1..=cfg.c {
        let ti = Instant::now();
        let stage = |what: &str| format!("iteration {it} {what}");
        let field = model.fields().iter().enumerate().fold(0, |best, (k, f)| {
            if f.hypers.signal_to_jitter() > model.fields()[best].hypers.signal_to_jitter() {
                k
            } else {
                best
            }
        });
        let fh = model.fields()[field].hypers;
        let new =
            SelectionProblem::from_kernel(pts, &fh.kernel(), fh.jitter(), chosen.clone(), cfg.m2)
                .and_then(|p| greedy_mi_select(&p))
                .map_err(|e| fail(e.in_stage(stage("latent selection")), Some(trace.clone())))?;
        let new_locs: Vec<SpatioTemporalPoint> = new.iter().map(|&i| pts[i]).collect();
        let mut fields = model.fields().to_vec();
        for f in &mut fields {
            // New values start at the current latent prediction, which leaves
            // the predictive mean, and so the data fit, unchanged.
            let init = f
                .predictor()
                .map(|p| p.predict(&new_locs))
                .map_err(|e| fail(e.in_stage(stage("latent prediction")), Some(trace.clone())))?;
            let m = f.len();
            f.extend(&new_locs, &init).map_err(|e| fail(e, None))?;
            f.set_frozen_prefix(m).map_err(|e| fail(e, None))?;
        }
        let opt = learn(
            data,
            cfg.kind,
            *model.globals(),
            fields,
            &cfg.optimize_options(1 + it as u64),
        )
        .map_err(|e| fail(e.in_stage(stage("optimization")), Some(trace.clone())))?;
        model = FittedNgp::new(cfg.kind, opt.globals, opt.fields).map_err(|e| fail(e, None))?;
        chosen.extend_from_slice(&new);
        trace
            .iterations
            .push(record(it, new, opt.objective, &model, ti));
    }
    Ok((model, trace))
}

/// Joint ML-II in two passes. With `z_M` near constant the latent lml rises by
/// about `ln(σ_fz/σ_jit)` per latent point as the latent signal shrinks, which
/// pins `z_M` in place. The first pass therefore holds
/// `θ_z` at its current value while the data pulls `z_M` apart; the second
/// frees everything from that point.
fn learn(
    data: &ObservationSet,
    kind: NgpKind,
    globals: GlobalHypers,
    fields: Vec<LatentField>,
    opts: &OptimizeOptions,
) -> Result<Optimum> {
    let held = OptimizeOptions {
        free: FreeParams {
            latent_hypers: false,
            ..opts.free
        },
        ..*opts
    };
    let a = joint_optimize(data, kind, globals, fields, &held)?;
    let refine = OptimizeOptions {
        restarts: 1,
        ..*opts
    };
    let b = joint_optimize(data, kind, a.globals, a.fields, &refine)?;
    Ok(Optimum {
        initial_objective: a.initial_objective,
        failed_restarts: a.failed_restarts + b.failed_restarts,
        evaluations: a.evaluations + b.evaluations,
        ..b
    })
}

fn record(
    iteration: usize,
    selected: Vec<usize>,
    objective: f64,
    model: &FittedNgp,
    start: Instant,
) -> IterationRecord {
    IterationRecord {
        iteration,
        selected,
        objective,
        globals: *model.globals(),
        latent_hypers: model.fields().iter().map(|f| f.hypers).collect(),
        model: model.clone(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Pointwise prediction under a fitted model.
pub fn predict(
    model: &FittedNgp,
    cond: &ObservationSet,
    xq: &[SpatioTemporalPoint],
) -> Result<Prediction> {
    ngp_predict(model, cond, xq)
}
