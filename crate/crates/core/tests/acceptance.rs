//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Criterion 7 and the R^2 part of criterion 8 are advisory. Criteria 5
//! and 6 are reported but only fail the run under
//! `LISAL_STRICT_ACCEPTANCE=1`; see the README for why. Everything else
//! fails the run when it fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use lisal::gp::kernel::KernelFamily;
use lisal::harness::oracle_suite::{
    degeneracy_checks, numerics_checks, psd_check, submodular_checks,
};
use lisal::harness::{run_experiment, write_outcome, ExperimentConfig, ExperimentOutcome};
use lisal::nonstationary::NgpKind;
use lisal::oracle::OracleCheck;

const SEED: u64 = 20_240_601;

#[derive(Clone, Copy, PartialEq)]
enum Gate {
    Blocking,
    Reported,
    Advisory,
}

struct Verdict {
    id: u32,
    passed: Option<bool>,
    gate: Gate,
}

fn report(id: u32, gate: Gate, passed: Option<bool>, detail: &str) -> Verdict {
    let tag = match passed {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "SKIP",
    };
    let note = match gate {
        Gate::Blocking => "",
        Gate::Reported => " (reported)",
        Gate::Advisory => " (advisory)",
    };
    println!("criterion {id}: {tag}{note} {detail}");
    Verdict { id, passed, gate }
}

fn describe(checks: &[OracleCheck]) -> String {
    checks
        .iter()
        .map(|c| format!("{} worst {:.2e} tol {:.0e}", c.name, c.worst, c.tolerance))
        .collect::<Vec<_>>()
        .join("; ")
}

fn all_pass(checks: &[OracleCheck]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let checks = numerics_checks(SEED, 100);
    let secs = t.elapsed().as_secs_f64();
    let ok = all_pass(&checks) && secs < 10.0;
    report(
        1,
        Gate::Blocking,
        Some(ok),
        &format!("{} | {secs:.2}s", describe(&checks)),
    )
}

fn criterion_2() -> Verdict {
    let checks = degeneracy_checks(SEED + 1, 20);
    report(
        2,
        Gate::Blocking,
        Some(all_pass(&checks)),
        &describe(&checks),
    )
}

fn criterion_3() -> Verdict {
    let checks = [psd_check(SEED + 2, 50)];
    report(
        3,
        Gate::Blocking,
        Some(all_pass(&checks)),
        &describe(&checks),
    )
}

fn criterion_4() -> Verdict {
    let checks = submodular_checks(SEED + 3, 50);
    report(
        4,
        Gate::Blocking,
        Some(all_pass(&checks)),
        &describe(&checks),
    )
}

/// Criteria 5 and 6 share the same five default synthetic runs.
fn criteria_5_6() -> [Verdict; 2] {
    let t = Instant::now();
    let runs: Vec<ExperimentOutcome> = (0..5)
        .map(|seed| {
            let cfg = ExperimentConfig {
                seed,
                ..ExperimentConfig::default()
            };
            run_experiment(&cfg).expect("synthetic run")
        })
        .collect();
    let secs = t.elapsed().as_secs_f64();
    let n = runs[0].report.n_train;
    let rmse = |o: &ExperimentOutcome| o.report.mean_rmse;
    let offline = |o: &ExperimentOutcome| o.report.per_iteration_mean_rmse[0];
    let improvement: Vec<f64> = runs
        .iter()
        .map(|o| o.report.improvement_over_stationary)
        .collect();
    let final_rmse = median(runs.iter().map(rmse).collect());
    let offline_rmse = median(runs.iter().map(offline).collect());
    let med_imp = median(improvement.clone());
    let ok5 = final_rmse <= offline_rmse && med_imp >= 0.05 && secs < 900.0;
    let v5 = report(
        5,
        Gate::Reported,
        Some(ok5),
        &format!(
            "n={n} median RMSE lisal {final_rmse:.4} vs c=0 {offline_rmse:.4}; \
             median improvement over stationary {:.1}% (pass >= 5%, target 10%); \
             per seed {:?}; {secs:.1}s",
            100.0 * med_imp,
            improvement
                .iter()
                .map(|v| (1000.0 * v).round() / 10.0)
                .collect::<Vec<_>>()
        ),
    );
    let recovery: Vec<f64> = runs
        .iter()
        .map(|o| {
            o.report
                .iterations
                .last()
                .and_then(|e| e.latent_recovery)
                .unwrap_or(0.0)
        })
        .collect();
    let med_rec = median(recovery.clone());
    let v6 = report(
        6,
        Gate::Reported,
        Some(med_rec >= 0.7),
        &format!(
            "median |pearson| {med_rec:.3} (need >= 0.7); per seed {:?}",
            recovery
                .iter()
                .map(|v| (1000.0 * v).round() / 1000.0)
                .collect::<Vec<_>>()
        ),
    );
    [v5, v6]
}

fn criterion_7() -> Verdict {
    let Some(path) = std::env::var_os("LISAL_WIND_CSV").map(PathBuf::from) else {
        return report(
            7,
            Gate::Advisory,
            None,
            "set LISAL_WIND_CSV to the converted wind CSV",
        );
    };
    let cfg = ExperimentConfig {
        data: Some(path),
        kind: NgpKind::Leis,
        family: KernelFamily::ChEx3,
        m1: 6,
        m2: 6,
        c: 9,
        seed: SEED,
        ..ExperimentConfig::default()
    };
    match run_experiment(&cfg) {
        Ok(o) => {
            let r = &o.report;
            let stat = r.stationary.simulation.mean_rmse;
            let ok = (2.4..=3.4).contains(&r.mean_rmse) && r.mean_rmse <= stat;
            report(
                7,
                Gate::Advisory,
                Some(ok),
                &format!(
                    "n_train={} LEIS-Ex3 {:.3} knots (expected 2.86), stationary Ex3 {stat:.3} (expected 2.98)",
                    r.n_train, r.mean_rmse
                ),
            )
        }
        Err(e) => report(7, Gate::Advisory, Some(false), &format!("run failed: {e}")),
    }
}

fn criterion_8() -> Verdict {
    let cfg = ExperimentConfig {
        synth_nx: 12,
        synth_ny: 12,
        synth_nt: 6,
        m1: 6,
        m2: 6,
        c: 9,
        seed: SEED,
        ..ExperimentConfig::default()
    };
    let o = run_experiment(&cfg).expect("scaling run");
    let mut elapsed = 0.0;
    let points: Vec<(f64, f64)> = o
        .trace
        .iterations
        .iter()
        .map(|r| {
            elapsed += r.seconds;
            (r.model.latent_locations().len() as f64, elapsed)
        })
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        0.0
    };
    // R^2 is hardware-noisy; the direction of the trend is not.
    let gate = if slope > 0.0 {
        Gate::Advisory
    } else {
        Gate::Blocking
    };
    report(
        8,
        gate,
        Some(r2 >= 0.8 && slope > 0.0),
        &format!(
            "n={} m=6..60 cumulative fit time slope {:.4}s per location, R^2 {r2:.3} (need >= 0.8)",
            o.report.n_train, slope
        ),
    )
}

fn criterion_9() -> Verdict {
    let cfg = ExperimentConfig {
        seed: SEED,
        ..ExperimentConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_outcome(d.path(), &run_experiment(&cfg).expect("determinism run")).unwrap();
    }
    let files = ["report.json", "rmse.csv", "model.json", "trace.json"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| {
            std::fs::read(dirs[0].path().join(f)).unwrap()
                != std::fs::read(dirs[1].path().join(f)).unwrap()
        })
        .collect();
    report(
        9,
        Gate::Blocking,
        Some(differing.is_empty()),
        &format!("{} compared, differing: {differing:?}", files.join(", ")),
    )
}

fn main() -> ExitCode {
    // `cargo test` probes every target with `--list`.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let strict = std::env::var("LISAL_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1");
    let start = Instant::now();
    let mut verdicts = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4()];
    verdicts.extend(criteria_5_6());
    verdicts.push(criterion_7());
    verdicts.push(criterion_8());
    verdicts.push(criterion_9());
    let fatal: Vec<u32> = verdicts
        .iter()
        .filter(|v| {
            v.passed == Some(false)
                && (v.gate == Gate::Blocking || (strict && v.gate == Gate::Reported))
        })
        .map(|v| v.id)
        .collect();
    println!(
        "acceptance finished in {:.1}s; fatal failures: {fatal:?}",
        start.elapsed().as_secs_f64()
    );
    if fatal.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
