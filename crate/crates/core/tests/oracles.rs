//! Fast paths against the dense brute-force oracles on fresh seeds.

use lisal::harness::oracle_suite::{
    degeneracy_checks, numerics_checks, psd_check, submodular_checks,
};
use lisal::oracle::OracleCheck;

fn assert_all(checks: &[OracleCheck]) {
    for c in checks {
        assert!(
            c.passed,
            "{}: worst {:e} over {} instances, tolerance {:e}",
            c.name, c.worst, c.instances, c.tolerance
        );
    }
}

#[test]
fn numerics_match_dense_oracles() {
    for seed in 1000..1003 {
        assert_all(&numerics_checks(seed, 30));
    }
}

#[test]
fn degenerate_locals_reproduce_stationary_matrices() {
    for seed in 1000..1003 {
        assert_all(&degeneracy_checks(seed, 10));
    }
}

#[test]
fn nonstationary_matrices_are_psd() {
    for seed in 1000..1003 {
        assert_all(&[psd_check(seed, 20)]);
    }
}

#[test]
fn greedy_selection_meets_the_submodular_bound() {
    for seed in 1000..1003 {
        assert_all(&submodular_checks(seed, 20));
    }
}
