//! Experiment plumbing: datasets, synthetic generation, the sensing
//! simulation, configuration, snapshots and reports.

pub mod config;
pub mod data;
pub mod experiment;
pub mod oracle_suite;
pub mod simulate;
pub mod snapshot;
pub mod synth;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, write_outcome, Dataset, ExperimentOutcome, ExperimentReport};
pub use simulate::{simulate_sensing, SimulationOptions, SimulationReport, Standardization};
pub use snapshot::{ModelSnapshot, SnapshotModel};
pub use synth::{synth_generate, LatentProfile, SynthData, SynthSpec};
