use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};

/// Smallest and largest jitter, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor `K + jitter·I = LLᵀ` of a symmetric matrix.
///
/// Factorization is first attempted as-is, then with jitter
/// `1e-10·mean(diag)` growing tenfold up to `1e-4·mean(diag)`.
pub struct Factor {
    llt: Option<faer::linalg::solvers::Llt<f64>>,
    n: usize,
    jitter: f64,
}

impl std::fmt::Debug for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factor")
            .field("n", &self.n)
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl Factor {
    pub fn new(k: &Mat<f64>, context: &str) -> Result<Self> {
        let n = k.nrows();
        debug_assert_eq!(n, k.ncols());
        if n == 0 {
            return Ok(Self {
                llt: None,
                n,
                jitter: 0.0,
            });
        }
        let mean_diag = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n as f64;
        if !(mean_diag.is_finite() && mean_diag > 0.0) {
            return Err(Error::Numerical {
                context: format!("{context}: diagonal mean {mean_diag}"),
                jitter: 0.0,
            });
        }
        if let Ok(llt) = k.llt(Side::Lower) {
            if llt_is_finite(&llt) {
                return Ok(Self {
                    llt: Some(llt),
                    n,
                    jitter: 0.0,
                });
            }
        }
        let mut rel = JITTER_START;
        let mut work = k.clone();
        let mut applied = 0.0;
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = rel * mean_diag;
            for i in 0..n {
                work[(i, i)] += jitter - applied;
            }
            applied = jitter;
            if let Ok(llt) = work.llt(Side::Lower) {
                if llt_is_finite(&llt) {
                    log::trace!("{context}: factorized with jitter {jitter:e}");
                    return Ok(Self {
                        llt: Some(llt),
                        n,
                        jitter,
                    });
                }
            }
            rel *= 10.0;
        }
        Err(Error::Numerical {
            context: context.to_string(),
            jitter: applied,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Diagonal jitter that was added before factorizing.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> Option<faer::MatRef<'_, f64>> {
        self.llt.as_ref().map(|l| l.L())
    }

    pub fn log_det(&self) -> f64 {
        match &self.llt {
            None => 0.0,
            Some(llt) => {
                let l = llt.L();
                2.0 * (0..self.n).map(|i| l[(i, i)].ln()).sum::<f64>()
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        match &self.llt {
            None => Vec::new(),
            Some(llt) => {
                let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
                llt.solve_in_place(rhs.as_mut());
                (0..self.n).map(|i| rhs[(i, 0)]).collect()
            }
        }
    }

    pub fn solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        assert_eq!(b.nrows(), self.n);
        match &self.llt {
            None => Mat::zeros(0, b.ncols()),
            Some(llt) => llt.solve(b),
        }
    }

    /// `L⁻¹ B`.
    pub fn half_solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        assert_eq!(b.nrows(), self.n);
        let mut out = b.clone();
        if let Some(llt) = &self.llt {
            solve_lower_triangular_in_place(llt.L(), out.as_mut(), Par::Seq);
        }
        out
    }

    pub fn inverse(&self) -> Mat<f64> {
        match &self.llt {
            None => Mat::zeros(0, 0),
            Some(llt) => llt.inverse(),
        }
    }

    /// `bᵀ K⁻¹ b`.
    pub fn quad_form(&self, b: &[f64]) -> f64 {
        let x = self.solve(b);
        x.iter().zip(b).map(|(a, c)| a * c).sum()
    }
}

fn llt_is_finite(llt: &faer::linalg::solvers::Llt<f64>) -> bool {
    let l = llt.L();
    (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.is_finite() && d > 0.0
    })
}

/// Adds `v` to every diagonal entry.
pub fn add_diagonal(m: &mut Mat<f64>, v: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_matrix_factors() {
        let f = Factor::new(&Mat::zeros(0, 0), "empty").unwrap();
        assert_eq!(f.log_det(), 0.0);
        assert!(f.solve(&[]).is_empty());
    }

    #[test]
    fn well_conditioned_matrix_needs_no_jitter() {
        let k = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.5 });
        let f = Factor::new(&k, "k").unwrap();
        assert_eq!(f.jitter(), 0.0);
        let x = f.solve(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| k[(i, j)] * x[j]).sum();
            assert!((r - (i + 1) as f64).abs() < 1e-12);
        }
        // det = (2-0.5)^2 (2+2*0.5)
        assert!((f.log_det() - (1.5f64 * 1.5 * 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        // Rank one.
        let k = Mat::from_fn(4, 4, |_, _| 1.0);
        let f = Factor::new(&k, "rank one").unwrap();
        assert!(f.jitter() > 0.0 && f.jitter() <= JITTER_MAX * 1.0000001);
    }

    #[test]
    fn indefinite_matrix_fails_with_max_jitter() {
        let mut k = Mat::identity(3, 3);
        k[(2, 2)] = -1.0;
        match Factor::new(&k, "indefinite") {
            Err(Error::Numerical { jitter, .. }) => {
                assert!((jitter / (1.0 / 3.0) - JITTER_MAX).abs() < 1e-12)
            }
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn inverse_and_half_solve_agree() {
        let k = Mat::from_fn(3, 3, |i, j| (-((i as f64 - j as f64).powi(2)) / 2.0).exp());
        let mut k = k;
        add_diagonal(&mut k, 0.1);
        let f = Factor::new(&k, "k").unwrap();
        let inv = f.inverse();
        let v = f.half_solve_mat(&Mat::identity(3, 3));
        // K⁻¹ = L⁻ᵀ L⁻¹
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|r| v[(r, i)] * v[(r, j)]).sum();
                assert!((s - inv[(i, j)]).abs() < 1e-12);
            }
        }
    }
}
