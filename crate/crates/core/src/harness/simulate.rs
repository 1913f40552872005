//! The sensing simulation: at every test timestep pick `k` training sites
//! by mutual information under the fixed model, condition on their values
//! and score predictions at the test sites.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::point::ObservationSet;
use crate::nonstationary::{predict_with, CovarianceModel};
use crate::selection::{greedy_mi_select, SelectionProblem};

/// Affine map from original units to model units: `(v − mean) / sd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub const IDENTITY: Self = Self { mean: 0.0, sd: 1.0 };

    /// Zero mean and unit (population) sd over `values`; identity scale when constant.
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::IDENTITY;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            sd: if sd > 0.0 { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.sd + self.mean
    }

    pub fn apply_set(&self, set: &ObservationSet) -> Result<ObservationSet> {
        set.with_values(set.values().iter().map(|&v| self.apply(v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Observations per timestep.
    pub k: usize,
    /// Earlier timesteps whose selected observations stay in the conditioning set.
    pub history_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepResult {
    pub t: f64,
    /// Training timestep the observations were taken at.
    pub train_t: f64,
    /// Indices into the training set.
    pub selected: Vec<usize>,
    pub n_test: usize,
    /// In original units.
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub timesteps: Vec<TimestepResult>,
    pub mean_rmse: f64,
}

fn distinct_sorted(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Runs the simulation. `train` and `test` are in original units; the model
/// works in the units given by `standardization`.
pub fn simulate_sensing<M: CovarianceModel + ?Sized>(
    model: &M,
    train: &ObservationSet,
    test: &ObservationSet,
    opts: SimulationOptions,
    standardization: Standardization,
) -> Result<SimulationReport> {
    if opts.k == 0 {
        return Err(Error::Config(
            "observations per timestep must be at least 1".into(),
        ));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("simulation needs training and test points"));
    }
    let train_std = standardization.apply_set(train)?;
    let train_ts = distinct_sorted(train.points().iter().map(|p| p.t()));
    let test_ts = distinct_sorted(test.points().iter().map(|p| p.t()));
    // Each test timestep is served by the latest training timestep not after
    // it, or the first one when it precedes them all.
    let slot = |t: f64| train_ts.iter().rposition(|&s| s <= t).unwrap_or(0);
    let at = |set: &ObservationSet, t: f64| -> Vec<usize> {
        (0..set.len())
            .filter(|&i| set.points()[i].t() == t)
            .collect()
    };
    for &s in &train_ts {
        let n = at(train, s).len();
        if opts.k > n {
            return Err(Error::Config(format!(
                "k = {} exceeds the {n} training sites at t = {s}",
                opts.k
            )));
        }
    }

    let step = |j: usize, history: &[usize]| -> Result<TimestepResult> {
        let t = test_ts[j];
        let train_t = train_ts[slot(t)];
        let mut pool: Vec<usize> = history.to_vec();
        pool.extend(at(train, train_t));
        let pts: Vec<_> = pool.iter().map(|&i| train.points()[i]).collect();
        let problem =
            SelectionProblem::from_model(&pts, model, (0..history.len()).collect(), opts.k)?;
        let picked: Vec<usize> = greedy_mi_select(&problem)?
            .into_iter()
            .map(|i| pool[i])
            .collect();
        let mut cond_idx = history.to_vec();
        cond_idx.extend_from_slice(&picked);
        let cond = train_std.select(&cond_idx);
        let tq = at(test, t);
        let xq: Vec<_> = tq.iter().map(|&i| test.points()[i]).collect();
        let pred = predict_with(model, &cond, &xq)?;
        let sse: f64 = tq
            .iter()
            .zip(&pred.mean)
            .map(|(&i, &m)| (standardization.invert(m) - test.values()[i]).powi(2))
            .sum();
        Ok(TimestepResult {
            t,
            train_t,
            selected: picked,
            n_test: tq.len(),
            rmse: (sse / tq.len() as f64).sqrt(),
        })
    };
    let tag = |j: usize, e: Error| e.in_stage(format!("simulation at t = {}", test_ts[j]));

    let timesteps: Vec<TimestepResult> = if opts.history_window == 0 {
        (0..test_ts.len())
            .into_par_iter()
            .map(|j| step(j, &[]).map_err(|e| tag(j, e)))
            .collect::<Result<_>>()?
    } else {
        let mut out: Vec<TimestepResult> = Vec::with_capacity(test_ts.len());
        for j in 0..test_ts.len() {
            // Observations from earlier distinct training timesteps only.
            let current = train_ts[slot(test_ts[j])];
            let mut history = Vec::new();
            let mut used = Vec::new();
            for r in out.iter().rev() {
                if r.train_t < current && !used.contains(&r.train_t) {
                    if used.len() == opts.history_window {
                        break;
                    }
                    used.push(r.train_t);
                    history.splice(0..0, r.selected.iter().copied());
                }
            }
            out.push(step(j, &history).map_err(|e| tag(j, e))?);
        }
        out
    };
    let mean_rmse = timesteps.iter().map(|r| r.rmse).sum::<f64>() / timesteps.len() as f64;
    Ok(SimulationReport {
        timesteps,
        mean_rmse,
    })
}
