//! Greedy placement by mutual information, and a maximum-entropy baseline.
//!
//! Each step scores a candidate `y` by `σ²(y | A) / σ²(y | Ā)`, where `A` is
//! the selected set and `Ā` every other candidate. The first variance is a
//! Schur complement of the covariance `Σ`; the second is the reciprocal of
//! the same Schur complement of the precision `Q = Σ⁻¹` restricted to
//! `A ∪ {y}`. Both are maintained as incremental Cholesky rows, updated
//! lazily: a candidate is only brought up to date when it reaches the top
//! of the priority queue. The score can only shrink as `A` grows, so stale
//! queue entries are valid upper bounds and the lazy result equals plain
//! greedy. Cost is `O(n²)` setup plus `O(n³)` for the precision and
//! `O(n·|A|)` per candidate refresh.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use faer::Mat;

use crate::error::{Error, Result};
use crate::gp::factor::{add_diagonal, Factor};
use crate::gp::kernel::{cov_matrix, CovFn};
use crate::gp::point::SpatioTemporalPoint;
use crate::nonstationary::CovarianceModel;

/// A candidate pool described by its noisy covariance `Σ = K + σ² I`.
#[derive(Debug, Clone)]
pub struct SelectionProblem {
    cov: Mat<f64>,
    preselected: Vec<usize>,
    budget: usize,
}

impl SelectionProblem {
    pub fn new(cov: Mat<f64>, preselected: Vec<usize>, budget: usize) -> Result<Self> {
        let n = cov.nrows();
        if cov.ncols() != n {
            return Err(Error::invalid("selection covariance must be square"));
        }
        let mut seen = vec![false; n];
        for &i in &preselected {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!(
                    "preselected index {i} out of range or repeated"
                )));
            }
        }
        if budget + preselected.len() > n {
            return Err(Error::invalid(format!(
                "budget {budget} plus {} preselected exceeds {n} candidates",
                preselected.len()
            )));
        }
        Ok(Self {
            cov,
            preselected,
            budget,
        })
    }

    pub fn from_kernel<K: CovFn + ?Sized>(
        candidates: &[SpatioTemporalPoint],
        kernel: &K,
        noise_sd: f64,
        preselected: Vec<usize>,
        budget: usize,
    ) -> Result<Self> {
        let mut cov = cov_matrix(candidates, candidates, kernel);
        add_diagonal(&mut cov, noise_sd * noise_sd);
        Self::new(cov, preselected, budget)
    }

    pub fn from_model<M: CovarianceModel + ?Sized>(
        candidates: &[SpatioTemporalPoint],
        model: &M,
        preselected: Vec<usize>,
        budget: usize,
    ) -> Result<Self> {
        let mut cov = model.cov_matrix_sym(candidates)?;
        let s = model.noise_sd();
        add_diagonal(&mut cov, s * s);
        Self::new(cov, preselected, budget)
    }

    pub fn n(&self) -> usize {
        self.cov.nrows()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn preselected(&self) -> &[usize] {
        &self.preselected
    }

    pub fn cov(&self) -> &Mat<f64> {
        &self.cov
    }
}

/// Conditional variance of `y` given `set` under the covariance `m`.
fn conditional_variance(m: &Mat<f64>, y: usize, set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Ok(m[(y, y)]);
    }
    let sub = Mat::from_fn(set.len(), set.len(), |i, j| m[(set[i], set[j])]);
    let f = Factor::new(&sub, "selection conditioning")?;
    let b: Vec<f64> = set.iter().map(|&i| m[(i, y)]).collect();
    Ok(m[(y, y)] - f.quad_form(&b))
}

/// `σ²(y | A) / σ²(y | Ā)` with `Ā` = all candidates outside `A ∪ {y}`,
/// computed directly by conditioning.
pub fn mi_score(y: usize, a: &[usize], problem: &SelectionProblem) -> Result<f64> {
    let n = problem.n();
    if y >= n || a.contains(&y) {
        return Err(Error::invalid(format!(
            "candidate {y} is out of range or already selected"
        )));
    }
    let rest: Vec<usize> = (0..n).filter(|i| *i != y && !a.contains(i)).collect();
    let num = conditional_variance(&problem.cov, y, a)?;
    let den = conditional_variance(&problem.cov, y, &rest)?;
    Ok(num / den)
}

/// Cholesky rows of a symmetric matrix restricted to a growing index set,
/// computed on demand per candidate.
struct IncrementalSchur<'a> {
    m: &'a Mat<f64>,
    /// `rows[y][k]`: entry of `y` against the `k`-th selected index.
    rows: Vec<Vec<f64>>,
    /// Schur complement of `y` given the first `rows[y].len()` selections.
    cond: Vec<f64>,
    /// Cholesky pivots of the selected indices.
    pivots: Vec<f64>,
    order: Vec<usize>,
}

impl<'a> IncrementalSchur<'a> {
    fn new(m: &'a Mat<f64>) -> Self {
        let n = m.nrows();
        Self {
            m,
            rows: vec![Vec::new(); n],
            cond: (0..n).map(|i| m[(i, i)]).collect(),
            pivots: Vec::new(),
            order: Vec::new(),
        }
    }

    fn refresh(&mut self, y: usize) -> f64 {
        while self.rows[y].len() < self.order.len() {
            let k = self.rows[y].len();
            let s = self.order[k];
            let mut v = self.m[(y, s)];
            for i in 0..k {
                v -= self.rows[y][i] * self.rows[s][i];
            }
            v /= self.pivots[k];
            self.rows[y].push(v);
            self.cond[y] -= v * v;
        }
        self.cond[y]
    }

    fn push(&mut self, s: usize) -> Result<()> {
        let c = self.refresh(s);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Numerical {
                context: format!("selection: conditional variance {c:e} for candidate {s}"),
                jitter: 0.0,
            });
        }
        self.pivots.push(c.sqrt());
        self.order.push(s);
        Ok(())
    }
}

#[derive(PartialEq)]
struct Entry {
    score: f64,
    index: usize,
    /// Selected-set size the score was computed at.
    stamp: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Criterion {
    MutualInformation,
    Entropy,
}

fn select(problem: &SelectionProblem, criterion: Criterion) -> Result<Vec<usize>> {
    let n = problem.n();
    // The covariance is jittered once so Σ and Q describe the same matrix.
    let f = Factor::new(&problem.cov, "selection covariance")?;
    let mut sigma = problem.cov.clone();
    add_diagonal(&mut sigma, f.jitter());
    let q = match criterion {
        Criterion::MutualInformation => Some(f.inverse()),
        Criterion::Entropy => None,
    };
    let mut num = IncrementalSchur::new(&sigma);
    let mut den = q.as_ref().map(IncrementalSchur::new);
    let mut chosen = vec![false; n];
    for &s in &problem.preselected {
        num.push(s)?;
        if let Some(d) = den.as_mut() {
            d.push(s)?;
        }
        chosen[s] = true;
    }
    let score_of = |y: usize, num: &mut IncrementalSchur, den: &mut Option<IncrementalSchur>| {
        let a = num.refresh(y);
        match den {
            // σ²(y|Ā) = 1 / (Q_yy − Q_yA Q_AA⁻¹ Q_Ay)
            Some(d) => a * d.refresh(y),
            None => a,
        }
    };
    let mut heap: BinaryHeap<Entry> = (0..n)
        .filter(|&i| !chosen[i])
        .map(|i| Entry {
            score: score_of(i, &mut num, &mut den),
            index: i,
            stamp: problem.preselected.len(),
        })
        .collect();
    let mut out = Vec::with_capacity(problem.budget);
    while out.len() < problem.budget {
        let Some(top) = heap.pop() else { break };
        let size = problem.preselected.len() + out.len();
        if top.stamp == size {
            num.push(top.index)?;
            if let Some(d) = den.as_mut() {
                d.push(top.index)?;
            }
            out.push(top.index);
            continue;
        }
        let s = score_of(top.index, &mut num, &mut den);
        if !s.is_finite() {
            return Err(Error::Numerical {
                context: format!("selection score for candidate {}", top.index),
                jitter: f.jitter(),
            });
        }
        heap.push(Entry {
            score: s,
            index: top.index,
            stamp: size,
        });
    }
    Ok(out)
}

/// Greedy maximization of mutual information between the selected and the
/// unselected candidates, conditioned on the preselected ones.
pub fn greedy_mi_select(problem: &SelectionProblem) -> Result<Vec<usize>> {
    if problem.budget == 0 {
        return Err(Error::invalid("selection budget must be at least 1"));
    }
    select(problem, Criterion::MutualInformation)
}

/// Greedy maximum-entropy placement: repeatedly picks the largest conditional variance.
pub fn entropy_select(problem: &SelectionProblem) -> Result<Vec<usize>> {
    if problem.budget == 0 {
        return Err(Error::invalid("selection budget must be at least 1"));
    }
    select(problem, Criterion::Entropy)
}
