//! Optimizer contracts and generative-recovery checks.

use lisal::gp::kernel::{BaseKernelSpec, GlobalHypers, KernelFamily};
use lisal::gp::point::ObservationSet;
use lisal::gp::regression::log_marginal_likelihood;
use lisal::harness::{synth_generate, LatentProfile, SynthSpec};
use lisal::latent::{latent_predict_mean, LatentField, LatentHypers};
use lisal::lisal::fit_stationary;
use lisal::nonstationary::NgpKind;
use lisal::objective::{joint_objective, FreeParams};
use lisal::optimize::{joint_optimize, stationary_optimize, OptimizeOptions};
use lisal::oracle::grid_argmax;
use lisal::selection::{greedy_mi_select, SelectionProblem};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn stationary_spec(nx: usize, ny: usize, nt: usize) -> SynthSpec {
    SynthSpec {
        nx,
        ny,
        nt,
        profile: LatentProfile::Constant,
        lengths: [0.4, 0.4, 2.0],
        noise_sd: 0.1,
        ..SynthSpec::default()
    }
}

fn latent_field(
    data: &ObservationSet,
    values: &[f64],
    frozen: usize,
    g: &GlobalHypers,
) -> LatentField {
    let m = values.len();
    let p =
        SelectionProblem::from_kernel(data.points(), &g.kernel(), g.sigma_n(), vec![], m).unwrap();
    let idx = greedy_mi_select(&p).unwrap();
    let locs = idx.iter().map(|&i| data.points()[i]).collect();
    let h = LatentHypers::new(1.0, [0.5, 0.5, 1.5], 1e-3).unwrap();
    LatentField::new(locs, values.to_vec(), h, frozen).unwrap()
}

#[test]
fn sigma_f_toy_matches_grid_search() {
    let spec = stationary_spec(4, 4, 3);
    let d = synth_generate(&spec, 11).unwrap();
    let g0 = spec.globals().unwrap();
    let field = latent_field(&d.train, &[0.0; 3], 0, &g0);
    let opts = OptimizeOptions {
        free: FreeParams::only_sigma_f(),
        ..OptimizeOptions::default()
    };
    let got = joint_optimize(&d.train, NgpKind::Leis, g0, vec![field.clone()], &opts).unwrap();
    let objective = |log_sf: f64| {
        let g = GlobalHypers {
            log_sigma_f: log_sf,
            ..g0
        };
        joint_objective(&d.train, NgpKind::Leis, &g, std::slice::from_ref(&field)).unwrap()
    };
    let (best, _) = grid_argmax(-3.0, 3.0, 10_000, objective);
    let sf = got.globals.sigma_f();
    assert!(
        (sf - best.exp()).abs() < 1e-3,
        "optimizer {sf}, grid {}",
        best.exp()
    );
}

#[test]
fn stationary_fit_recovers_length_scales() {
    let spec = SynthSpec {
        family: KernelFamily::SeAniso,
        ..stationary_spec(5, 4, 4)
    };
    let truth = spec.lengths.map(f64::ln);
    let mut errors: [Vec<f64>; 3] = Default::default();
    for seed in 0..5 {
        let d = synth_generate(&spec, seed).unwrap();
        assert_eq!(d.train.len(), 40);
        let (g, _) =
            fit_stationary(&d.train, KernelFamily::SeAniso, &OptimizeOptions::default()).unwrap();
        let BaseKernelSpec::SeAniso { log_lengths } = g.base else {
            panic!("family changed");
        };
        for a in 0..3 {
            errors[a].push((log_lengths[a] - truth[a]).abs());
        }
    }
    for (a, e) in errors.into_iter().enumerate() {
        let m = median(e);
        assert!(m <= 0.5, "axis {a}: median log-length error {m}");
    }
}

#[test]
fn leis_on_stationary_data_keeps_latent_spread_small() {
    let spec = stationary_spec(6, 6, 4);
    let mut spreads = Vec::new();
    for seed in 0..10 {
        let d = synth_generate(&spec, 100 + seed).unwrap();
        let opts = OptimizeOptions {
            seed,
            ..OptimizeOptions::default()
        };
        let (g, _) = fit_stationary(&d.train, spec.family, &opts).unwrap();
        let g = g.with_latent_length(1.0).unwrap();
        let field = latent_field(&d.train, &[0.0; 6], 0, &g);
        let o = joint_optimize(&d.train, NgpKind::Leis, g, vec![field], &opts).unwrap();
        let z = latent_predict_mean(&o.fields[0], d.train.points()).unwrap();
        let (lo, hi) = z
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(*v), b.max(*v))
            });
        spreads.push(hi - lo);
    }
    let m = median(spreads.clone());
    assert!(m <= 0.2, "median spread {m} from {spreads:?}");
}

#[test]
fn frozen_latent_values_are_untouched_and_objective_never_drops() {
    let spec = SynthSpec {
        nx: 5,
        ny: 4,
        nt: 3,
        ..SynthSpec::default()
    };
    let d = synth_generate(&spec, 3).unwrap();
    let (g, _) = fit_stationary(&d.train, spec.family, &OptimizeOptions::default()).unwrap();
    let g = g.with_latent_length(1.0).unwrap();
    let init = [0.4f64, -0.3, 1.1, 0.0, 0.2];
    for frozen in [5, 3] {
        let f = latent_field(&d.train, &init, frozen, &g);
        let before =
            joint_objective(&d.train, NgpKind::Leis, &g, std::slice::from_ref(&f)).unwrap();
        let o = joint_optimize(
            &d.train,
            NgpKind::Leis,
            g,
            vec![f],
            &OptimizeOptions::default(),
        )
        .unwrap();
        assert!(o.objective >= before - 1e-9);
        assert_eq!(o.initial_objective.to_bits(), before.to_bits());
        for (got, want) in o.fields[0].values().iter().zip(&init).take(frozen) {
            assert_eq!(got.to_bits(), want.to_bits());
        }
    }
}

#[test]
fn frozen_constant_field_reduces_to_stationary_fit() {
    let spec = stationary_spec(5, 4, 3);
    let d = synth_generate(&spec, 5).unwrap();
    let init = spec.globals().unwrap();
    let opts = OptimizeOptions::default();
    let stat = stationary_optimize(
        &d.train,
        GlobalHypers {
            log_latent_length: None,
            ..init
        },
        &opts,
    )
    .unwrap();
    // A constant non-zero z_M still reverts towards 0 between knots, so zero
    // is the constant that keeps every predicted coordinate equal.
    let field = latent_field(&d.train, &[0.0; 4], 4, &init);
    let held = OptimizeOptions {
        free: FreeParams {
            latent_hypers: false,
            ..FreeParams::default()
        },
        ..opts
    };
    let joint = joint_optimize(&d.train, NgpKind::Leis, init, vec![field.clone()], &held).unwrap();
    let latent = lisal::latent::latent_lml(&field).unwrap();
    let data_term = joint.objective - latent;
    assert!(
        (data_term - stat.objective).abs() < 1e-6,
        "joint data term {data_term}, stationary {}",
        stat.objective
    );
    let direct =
        log_marginal_likelihood(&d.train, &stat.globals.kernel(), stat.globals.sigma_n()).unwrap();
    assert!((direct - stat.objective).abs() < 1e-9);
}
