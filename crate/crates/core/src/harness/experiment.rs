//! End-to-end experiment: data, LISAL fit, per-iteration sensing simulation
//! and report files.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::load_csv;
use super::simulate::{simulate_sensing, SimulationReport, Standardization};
use super::snapshot::{ModelSnapshot, SnapshotModel};
use super::synth::synth_generate;
use crate::error::{Error, Result};
use crate::gp::point::ObservationSet;
use crate::latent::latent_predict_mean;
use crate::lisal::{lisal_fit, LisalTrace};
use crate::nonstationary::{CovarianceModel, FittedNgp};

/// Training and test data in original units, with the true latent values
/// at the training points when they are known.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: ObservationSet,
    pub test: ObservationSet,
    pub train_latent: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.data {
            Some(path) => {
                let (train, test) = load_csv(path)?;
                Ok(Self {
                    train,
                    test,
                    train_latent: None,
                })
            }
            None => {
                let d = synth_generate(&cfg.synth(), cfg.seed)?;
                Ok(Self {
                    train: d.train,
                    test: d.test,
                    train_latent: Some(d.train_latent),
                })
            }
        }
    }

    pub fn standardization(&self, enabled: bool) -> Standardization {
        if enabled {
            Standardization::fit(self.train.values())
        } else {
            Standardization::IDENTITY
        }
    }
}

/// Pearson correlation; `None` when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Mean absolute correlation between the learned latent predictive means at
/// the training points and the true latent values, over fields whose truth
/// varies. The sign is dropped because a latent coordinate is only defined
/// up to reflection.
pub fn latent_recovery(
    model: &FittedNgp,
    train: &ObservationSet,
    truth: &[Vec<f64>],
) -> Result<Option<f64>> {
    let mut rs = Vec::new();
    for (f, z) in model.fields().iter().zip(truth) {
        let learned = latent_predict_mean(f, train.points())?;
        if let Some(r) = pearson(&learned, z) {
            rs.push(r.abs());
        } else if pearson(z, z).is_some() {
            // Learned field is flat while the truth is not.
            rs.push(0.0);
        }
    }
    Ok((!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    /// LISAL iteration, `None` for the stationary baseline.
    pub iteration: Option<usize>,
    pub latent_locations: usize,
    pub objective: f64,
    pub latent_recovery: Option<f64>,
    pub simulation: SimulationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub standardization: Standardization,
    pub stationary: ModelEvaluation,
    pub iterations: Vec<ModelEvaluation>,
    pub per_iteration_mean_rmse: Vec<f64>,
    /// Mean RMSE of the final model.
    pub mean_rmse: f64,
    /// `1 − final / stationary` mean RMSE.
    pub improvement_over_stationary: f64,
}

/// Wall-clock seconds per stage; kept out of the report so reports are
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub data: f64,
    pub stationary_fit: f64,
    pub iterations: Vec<f64>,
    pub simulation: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub timing: Timing,
    pub snapshot: ModelSnapshot,
    pub trace: LisalTrace,
}

/// Fits LISAL to the standardized training data.
pub fn fit(cfg: &ExperimentConfig, data: &Dataset) -> Result<(ModelSnapshot, LisalTrace)> {
    let st = data.standardization(cfg.standardize);
    let train = st.apply_set(&data.train)?;
    let (model, trace) =
        lisal_fit(&train, &cfg.lisal()).map_err(|f| f.error.in_stage("lisal fit"))?;
    Ok((
        ModelSnapshot {
            model: SnapshotModel::Nonstationary { model },
            standardization: st,
        },
        trace,
    ))
}

pub fn simulate(
    cfg: &ExperimentConfig,
    data: &Dataset,
    snapshot: &ModelSnapshot,
) -> Result<SimulationReport> {
    simulate_sensing(
        &snapshot.model,
        &data.train,
        &data.test,
        cfg.simulation(),
        snapshot.standardization,
    )
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let data = Dataset::load(cfg).map_err(|e| e.in_stage("data"))?;
    cfg.lisal().validate(data.train.len())?;
    let t_data = start.elapsed().as_secs_f64();

    let (snapshot, trace) = fit(cfg, &data)?;
    let st = snapshot.standardization;
    let t_sim = Instant::now();
    let evaluate = |model: &dyn CovarianceModel, stage: String| {
        simulate_sensing(model, &data.train, &data.test, cfg.simulation(), st)
            .map_err(|e| e.in_stage(stage))
    };
    let stationary = ModelEvaluation {
        iteration: None,
        latent_locations: 0,
        objective: trace.stationary_objective,
        latent_recovery: None,
        simulation: evaluate(&trace.stationary, "stationary simulation".into())?,
    };
    let train_std = st.apply_set(&data.train)?;
    let mut iterations = Vec::with_capacity(trace.iterations.len());
    for r in &trace.iterations {
        let recovery = match &data.train_latent {
            Some(truth) => latent_recovery(&r.model, &train_std, truth)?,
            None => None,
        };
        iterations.push(ModelEvaluation {
            iteration: Some(r.iteration),
            latent_locations: r.model.latent_locations().len(),
            objective: r.objective,
            latent_recovery: recovery,
            simulation: evaluate(&r.model, format!("iteration {} simulation", r.iteration))?,
        });
    }
    let t_sim = t_sim.elapsed().as_secs_f64();

    let per_iteration_mean_rmse: Vec<f64> =
        iterations.iter().map(|e| e.simulation.mean_rmse).collect();
    let mean_rmse = *per_iteration_mean_rmse
        .last()
        .expect("at least iteration 0");
    let report = ExperimentReport {
        config: cfg.clone(),
        n_train: data.train.len(),
        n_test: data.test.len(),
        standardization: st,
        improvement_over_stationary: 1.0 - mean_rmse / stationary.simulation.mean_rmse,
        stationary,
        iterations,
        per_iteration_mean_rmse,
        mean_rmse,
    };
    let timing = Timing {
        data: t_data,
        stationary_fit: trace.stationary_seconds,
        iterations: trace.iterations.iter().map(|r| r.seconds).collect(),
        simulation: t_sim,
        total: start.elapsed().as_secs_f64(),
    };
    Ok(ExperimentOutcome {
        report,
        timing,
        snapshot,
        trace,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

/// Flat per-timestep RMSE table: `model,iteration,t,train_t,rmse`.
pub fn rmse_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("model,iteration,t,train_t,rmse\n");
    let evals = std::iter::once(("stationary", &report.stationary))
        .chain(report.iterations.iter().map(|e| ("lisal", e)));
    for (name, e) in evals {
        let it = e.iteration.map_or(String::new(), |i| i.to_string());
        for r in &e.simulation.timesteps {
            s.push_str(&format!("{name},{it},{},{},{}\n", r.t, r.train_t, r.rmse));
        }
    }
    s
}

/// Per-timestep table for a single simulation.
pub fn simulation_csv(report: &SimulationReport) -> String {
    let mut s = String::from("t,train_t,rmse\n");
    for r in &report.timesteps {
        s.push_str(&format!("{},{},{}\n", r.t, r.train_t, r.rmse));
    }
    s
}

/// Writes `report.json`, `rmse.csv`, `model.json`, `trace.json` and `timing.json`.
/// Everything but `timing.json` is reproducible for a fixed config.
pub fn write_outcome(dir: &Path, o: &ExperimentOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("report.json"), &json(&o.report))?;
    write(&dir.join("rmse.csv"), &rmse_csv(&o.report))?;
    o.snapshot.save(&dir.join("model.json"))?;
    write(&dir.join("trace.json"), &json(&o.trace.without_timing()))?;
    write(&dir.join("timing.json"), &json(&o.timing))
}

/// Writes a fitted snapshot and its trace, as the `fit` command does.
pub fn write_fit(dir: &Path, snapshot: &ModelSnapshot, trace: &LisalTrace) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    snapshot.save(&dir.join("model.json"))?;
    write(&dir.join("trace.json"), &json(&trace.without_timing()))
}

pub fn write_simulation(dir: &Path, report: &SimulationReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("simulation.json"), &json(report))?;
    write(&dir.join("simulation.csv"), &simulation_csv(report))
}
