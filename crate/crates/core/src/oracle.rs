//! Brute-force reference computations used to check the fast paths.
//!
//! Nothing here touches the factorization code: inverses and determinants
//! come from Gauss-Jordan elimination with partial pivoting on plain
//! `Vec<Vec<f64>>` matrices, set functions are evaluated by enumeration, and
//! covariance functions are written out from their closed forms.

use std::f64::consts::PI;

use serde::Serialize;

use crate::gp::kernel::{BaseKernelSpec, KernelFamily};
use crate::gp::point::SpatioTemporalPoint;

pub type Dense = Vec<Vec<f64>>;

/// Inverse and log-determinant by Gauss-Jordan elimination. `None` when singular.
pub fn inverse_logdet(a: &Dense) -> Option<(Dense, f64)> {
    let n = a.len();
    let mut m: Dense = a.clone();
    let mut inv: Dense = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut logdet = 0.0;
    let mut sign = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c] == 0.0 {
            return None;
        }
        if p != c {
            m.swap(p, c);
            inv.swap(p, c);
            sign = -sign;
        }
        let piv = m[c][c];
        if piv < 0.0 {
            sign = -sign;
        }
        logdet += piv.abs().ln();
        for j in 0..n {
            m[c][j] /= piv;
            inv[c][j] /= piv;
        }
        for r in 0..n {
            if r != c && m[r][c] != 0.0 {
                let f = m[r][c];
                for j in 0..n {
                    m[r][j] -= f * m[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    (sign > 0.0).then_some((inv, logdet))
}

pub fn mat_vec(a: &Dense, v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn sub(a: &Dense, rows: &[usize], cols: &[usize]) -> Dense {
    rows.iter()
        .map(|&i| cols.iter().map(|&j| a[i][j]).collect())
        .collect()
}

/// `log N(y; 0, K)` by explicit inverse and determinant.
pub fn mvn_log_density(k: &Dense, y: &[f64]) -> Option<f64> {
    let (inv, logdet) = inverse_logdet(k)?;
    let q: f64 = y.iter().zip(mat_vec(&inv, y)).map(|(a, b)| a * b).sum();
    Some(-0.5 * q - 0.5 * logdet - 0.5 * y.len() as f64 * (2.0 * PI).ln())
}

/// Block conditioning: mean `Kqx Ky⁻¹ y`, covariance `Kqq − Kqx Ky⁻¹ Kxq`.
pub fn condition(ky: &Dense, kxq: &Dense, kqq: &Dense, y: &[f64]) -> Option<(Vec<f64>, Dense)> {
    let nq = kqq.len();
    if y.is_empty() {
        return Some((vec![0.0; nq], kqq.clone()));
    }
    let (inv, _) = inverse_logdet(ky)?;
    let alpha = mat_vec(&inv, y);
    let n = y.len();
    let mean = (0..nq)
        .map(|j| (0..n).map(|i| kxq[i][j] * alpha[i]).sum())
        .collect();
    let mut cov = kqq.clone();
    for a in 0..nq {
        for b in 0..nq {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += kxq[i][a] * inv[i][j] * kxq[j][b];
                }
            }
            cov[a][b] -= s;
        }
    }
    Some((mean, cov))
}

/// `½ (log|Σ_AA| + log|Σ_BB| − log|Σ_VV|)` with `B = V \ A`.
pub fn set_mutual_information(cov: &Dense, a: &[usize]) -> Option<f64> {
    let n = cov.len();
    let b: Vec<usize> = (0..n).filter(|i| !a.contains(i)).collect();
    let ld = |s: &[usize]| -> Option<f64> {
        if s.is_empty() {
            Some(0.0)
        } else {
            inverse_logdet(&sub(cov, s, s)).map(|r| r.1)
        }
    };
    let all: Vec<usize> = (0..n).collect();
    Some(0.5 * (ld(a)? + ld(&b)? - ld(&all)?))
}

/// Conditional variance `Σ_yy − Σ_yS Σ_SS⁻¹ Σ_Sy`.
pub fn conditional_variance(cov: &Dense, y: usize, s: &[usize]) -> Option<f64> {
    if s.is_empty() {
        return Some(cov[y][y]);
    }
    let (inv, _) = inverse_logdet(&sub(cov, s, s))?;
    let b: Vec<f64> = s.iter().map(|&i| cov[i][y]).collect();
    let q: f64 = b.iter().zip(mat_vec(&inv, &b)).map(|(x, z)| x * z).sum();
    Some(cov[y][y] - q)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Best set mutual information over all `k`-subsets that contain `pre`.
pub fn exhaustive_best_mi(cov: &Dense, pre: &[usize], k: usize) -> Option<f64> {
    let n = cov.len();
    let rest: Vec<usize> = (0..n).filter(|i| !pre.contains(i)).collect();
    let mut best = f64::NEG_INFINITY;
    for s in subsets(rest.len(), k) {
        let mut a = pre.to_vec();
        a.extend(s.iter().map(|&i| rest[i]));
        best = best.max(set_mutual_information(cov, &a)?);
    }
    Some(best)
}

/// Greedy maximization of a set function, recomputing every score from
/// scratch; ties go to the lowest index.
pub fn naive_greedy<F>(n: usize, pre: &[usize], budget: usize, mut score: F) -> Vec<usize>
where
    F: FnMut(usize, &[usize]) -> f64,
{
    let mut a = pre.to_vec();
    let mut out = Vec::new();
    for _ in 0..budget {
        let mut best: Option<(f64, usize)> = None;
        for y in (0..n).filter(|y| !a.contains(y)) {
            let s = score(y, &a);
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, y));
            }
        }
        let Some((_, y)) = best else { break };
        a.push(y);
        out.push(y);
    }
    out
}

/// Argmax of `f` over a uniform grid of `points` values on `[lo, hi]`.
pub fn grid_argmax<F: FnMut(f64) -> f64>(lo: f64, hi: f64, points: usize, mut f: F) -> (f64, f64) {
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
pub fn min_eigenvalue(a: &Dense) -> f64 {
    let n = a.len();
    if n == 0 {
        return f64::INFINITY;
    }
    let mut m = a.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).fold(f64::INFINITY, f64::min)
}

pub fn from_mat(m: &faer::Mat<f64>) -> Dense {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Stationary covariance written out per family, independently of the
/// profile code: SE `σ² exp(−½ Σ dₖ²/lₖ²)`, Cressie-Huang Example 1
/// `σ²/(a²u²+1) · exp(−b²‖h‖²/(a²u²+1))` and Example 3
/// `σ²(a²u²+1) / ((a²u²+1)² + b²‖h‖²)^{3/2}`.
pub fn stationary_cov(
    spec: &BaseKernelSpec,
    sigma_f: f64,
    p: &SpatioTemporalPoint,
    q: &SpatioTemporalPoint,
) -> f64 {
    let (dx, dy, dt) = (p.x() - q.x(), p.y() - q.y(), p.t() - q.t());
    let s2 = sigma_f * sigma_f;
    match *spec {
        BaseKernelSpec::SeAniso { log_lengths } => {
            let l = log_lengths.map(f64::exp);
            s2 * (-0.5 * ((dx / l[0]).powi(2) + (dy / l[1]).powi(2) + (dt / l[2]).powi(2))).exp()
        }
        BaseKernelSpec::ChEx1 { log_a, log_b } => {
            let (a, b) = (log_a.exp(), log_b.exp());
            let d = a * a * dt * dt + 1.0;
            s2 / d * (-b * b * (dx * dx + dy * dy) / d).exp()
        }
        BaseKernelSpec::ChEx3 { log_a, log_b } => {
            let (a, b) = (log_a.exp(), log_b.exp());
            let d = a * a * dt * dt + 1.0;
            s2 * d / (d * d + b * b * (dx * dx + dy * dy)).powf(1.5)
        }
    }
}

/// Process-convolution covariance with local length scales `lp`, `lq` per
/// axis: `σ² Πₖ (lₚₖ l_qₖ)^{1/2} / ((lₚₖ² + l_qₖ²)/2)^{1/2}` times the
/// base family with unit scales at `dₖ² / ((lₚₖ² + l_qₖ²)/2)`.
pub fn pclsk_cov(
    family: KernelFamily,
    sigma_f: f64,
    p: &SpatioTemporalPoint,
    lp: [f64; 3],
    q: &SpatioTemporalPoint,
    lq: [f64; 3],
) -> f64 {
    let d = [p.x() - q.x(), p.y() - q.y(), p.t() - q.t()];
    let mut pref = 1.0;
    let mut scaled = [0.0; 3];
    for k in 0..3 {
        let avg = 0.5 * (lp[k] * lp[k] + lq[k] * lq[k]);
        pref *= (lp[k] * lq[k]).sqrt() / avg.sqrt();
        scaled[k] = d[k] / avg.sqrt();
    }
    let origin = SpatioTemporalPoint::new(0.0, 0.0, 0.0).expect("finite");
    let moved = SpatioTemporalPoint::new(scaled[0], scaled[1], scaled[2]).expect("finite");
    let unit = match family {
        KernelFamily::SeAniso => BaseKernelSpec::SeAniso {
            log_lengths: [0.0; 3],
        },
        KernelFamily::ChEx1 => BaseKernelSpec::ChEx1 {
            log_a: 0.0,
            log_b: 0.0,
        },
        KernelFamily::ChEx3 => BaseKernelSpec::ChEx3 {
            log_a: 0.0,
            log_b: 0.0,
        },
    };
    pref * stationary_cov(&unit, sigma_f, &origin, &moved)
}

/// Latent-extension covariance: stationary base times `exp(−½ (lₚ − l_q)²/l_l²)`.
pub fn leis_cov(
    spec: &BaseKernelSpec,
    sigma_f: f64,
    latent_length: f64,
    p: &SpatioTemporalPoint,
    lp: f64,
    q: &SpatioTemporalPoint,
    lq: f64,
) -> f64 {
    stationary_cov(spec, sigma_f, p, q) * (-0.5 * ((lp - lq) / latent_length).powi(2)).exp()
}

pub fn matrix<F: Fn(usize, usize) -> f64>(rows: usize, cols: usize, f: F) -> Dense {
    (0..rows)
        .map(|i| (0..cols).map(|j| f(i, j)).collect())
        .collect()
}

/// One oracle comparison: `worst` is the largest error (or violation) seen
/// over all instances, and the check passes when it is within `tolerance`.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub instances: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleCheck {
    pub fn new(name: impl Into<String>, instances: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances,
            worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_known_matrix() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let (inv, ld) = inverse_logdet(&a).unwrap();
        assert!((ld - 11f64.ln()).abs() < 1e-14);
        assert!((inv[0][0] - 3.0 / 11.0).abs() < 1e-15);
        assert!((inv[0][1] + 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_eigenvalue() {
        // Eigenvalues 1 and 3.
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        assert!((min_eigenvalue(&a) - 1.0).abs() < 1e-12);
        let b = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!((min_eigenvalue(&b) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn subset_counts() {
        assert_eq!(subsets(8, 3).len(), 56);
        assert_eq!(subsets(3, 0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn grid_search_finds_parabola_peak() {
        let (x, _) = grid_argmax(-1.0, 1.0, 10_001, |x| -(x - 0.3).powi(2));
        assert!((x - 0.3).abs() < 1e-3);
    }
}
