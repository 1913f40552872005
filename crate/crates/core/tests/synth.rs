//! Statistical checks on the synthetic generator.

use std::collections::HashMap;

use lisal::gp::kernel::{BaseKernelSpec, GlobalHypers};
use lisal::gp::regression::log_marginal_likelihood;
use lisal::harness::experiment::pearson;
use lisal::harness::{synth_generate, LatentProfile, SynthSpec};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[(v.len() - 1) / 2] + v[v.len() / 2])
}

#[test]
fn constant_profile_prefers_the_true_stationary_model() {
    let spec = SynthSpec {
        nx: 6,
        ny: 6,
        nt: 3,
        profile: LatentProfile::Constant,
        lengths: [0.4, 0.4, 2.0],
        noise_sd: 0.1,
        ..SynthSpec::default()
    };
    let truth = spec.globals().unwrap();
    let truth = GlobalHypers {
        log_latent_length: None,
        ..truth
    };
    let wrong = GlobalHypers {
        base: BaseKernelSpec::from_lengths(spec.family, [1.6, 1.6, 2.0]).unwrap(),
        ..truth
    };
    let margins: Vec<f64> = (0..20)
        .map(|seed| {
            let d = synth_generate(&spec, seed).unwrap();
            let lml = |g: &GlobalHypers| {
                log_marginal_likelihood(&d.train, &g.kernel(), g.sigma_n()).unwrap()
            };
            lml(&truth) - lml(&wrong)
        })
        .collect();
    assert!(median(margins.clone()) > 0.0, "{margins:?}");
}

/// Lag-1 correlation of values at horizontally adjacent grid sites whose
/// midpoint lies on the given side of the boundary.
fn lag1(spec: &SynthSpec, seed: u64, rough: bool) -> f64 {
    let d = synth_generate(spec, seed).unwrap();
    let mut at = HashMap::new();
    for set in [&d.train, &d.test] {
        for (p, v) in set.points().iter().zip(set.values()) {
            let key = (
                (p.x() * (spec.nx - 1) as f64).round() as usize,
                (p.y() * (spec.ny - 1) as f64).round() as usize,
                p.t() as usize,
            );
            at.insert(key, *v);
        }
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (&(i, j, t), v) in &at {
        let Some(w) = at.get(&(i + 1, j, t)) else {
            continue;
        };
        let mid = (i as f64 + 0.5) / (spec.nx - 1) as f64;
        if (mid > spec.boundary) == rough {
            a.push(*v);
            b.push(*w);
        }
    }
    pearson(&a, &b).unwrap()
}

#[test]
fn step_profile_roughens_the_right_half() {
    let spec = SynthSpec {
        nx: 12,
        ny: 6,
        nt: 2,
        contrast: 10.0,
        ..SynthSpec::default()
    };
    let gaps: Vec<f64> = (0..20)
        .map(|seed| lag1(&spec, seed, false) - lag1(&spec, seed, true))
        .collect();
    assert!(median(gaps.clone()) > 0.0, "{gaps:?}");
}

#[test]
fn noiseless_draws_are_bit_reproducible() {
    let spec = SynthSpec {
        nx: 4,
        ny: 4,
        nt: 2,
        noise_sd: 0.0,
        ..SynthSpec::default()
    };
    let a = synth_generate(&spec, 21).unwrap();
    let b = synth_generate(&spec, 21).unwrap();
    let bits = |s: &lisal::gp::point::ObservationSet| -> Vec<u64> {
        s.values().iter().map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&a.test), bits(&b.test));
    assert_eq!(bits(&a.train), bits(&b.train));
    assert_eq!(a.test.points(), b.test.points());
}
