//! `lisal` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lisal::harness::data::write_csv;
use lisal::harness::experiment::{fit, simulate, write_fit, write_simulation};
use lisal::harness::synth::write_latent_csv;
use lisal::harness::{
    run_experiment, synth_generate, write_outcome, Dataset, ExperimentConfig, ModelSnapshot,
};
use lisal::oracle::OracleCheck;
use lisal::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lisal",
    version,
    about = "Nonstationary GP learning with adaptive latent locations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit LISAL and write the model snapshot and trace.
    Fit(Common),
    /// Run the sensing simulation from a model snapshot.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Snapshot to load; defaults to `<out>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write a synthetic dataset and its true latent values.
    Synth(Common),
    /// Fit, simulate every iteration and write all reports.
    Run(Common),
    /// Run the brute-force oracle comparisons.
    Oracle(Common),
}

fn config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(c) => {
            let cfg = config(&c)?;
            let data = Dataset::load(&cfg)?;
            cfg.lisal().validate(data.train.len())?;
            let (snapshot, trace) = fit(&cfg, &data)?;
            write_fit(&cfg.out, &snapshot, &trace)?;
            log::info!("wrote {}", cfg.out.join("model.json").display());
        }
        Command::Simulate { common, model } => {
            let cfg = config(&common)?;
            let path = model.unwrap_or_else(|| cfg.out.join("model.json"));
            let snapshot = ModelSnapshot::load(&path)?;
            let data = Dataset::load(&cfg)?;
            let report = simulate(&cfg, &data, &snapshot)?;
            write_simulation(&cfg.out, &report)?;
            println!("mean_rmse {}", report.mean_rmse);
        }
        Command::Synth(c) => {
            let cfg = config(&c)?;
            let spec = cfg.synth();
            let d = synth_generate(&spec, cfg.seed)?;
            create_dir(&cfg.out)?;
            write_csv(&cfg.out.join("data.csv"), &d.train, &d.test)?;
            write_latent_csv(&cfg.out.join("latent.csv"), spec.kind, &d)?;
            log::info!(
                "wrote {} train and {} test rows",
                d.train.len(),
                d.test.len()
            );
        }
        Command::Run(c) => {
            let cfg = config(&c)?;
            let o = run_experiment(&cfg)?;
            write_outcome(&cfg.out, &o)?;
            println!(
                "stationary_mean_rmse {}",
                o.report.stationary.simulation.mean_rmse
            );
            for (i, r) in o.report.per_iteration_mean_rmse.iter().enumerate() {
                println!("iteration {i} mean_rmse {r}");
            }
        }
        Command::Oracle(c) => {
            let cfg = config(&c)?;
            let checks = lisal::harness::oracle_suite::run_all(cfg.seed);
            create_dir(&cfg.out)?;
            let path = cfg.out.join("oracle.json");
            let json = serde_json::to_string_pretty(&checks).expect("checks serialize");
            std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            for c in &checks {
                println!(
                    "{} {} worst {:e} tol {:e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.worst,
                    c.tolerance
                );
            }
            let failed: Vec<&OracleCheck> = checks.iter().filter(|c| !c.passed).collect();
            if !failed.is_empty() {
                return Err(Error::Optimization(format!(
                    "{} oracle checks failed",
                    failed.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
