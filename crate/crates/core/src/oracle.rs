//! Exact solutions of small quadratic programs by active-set enumeration.
//!
//! Every subset of inequality constraints up to a size cap is treated as the
//! active set; the equality-constrained KKT system is solved directly and the
//! candidate is kept when it is primal feasible with nonnegative multipliers.
//! This is exhaustive (and slow), and shares no code with the dynamics, which
//! makes it usable as ground truth for them.

use std::sync::Arc;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::{Affine, ConvexProgram, FieldRef, ProblemError, Quadratic};
use crate::svm::{SvmDataset, SvmError};

/// Largest SVM instance `solve_exact` accepts by default.
pub const DEFAULT_POINT_LIMIT: usize = 25;

const SINGULAR_TOL: f64 = 1e-10;
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{p} constraints exceed the enumeration limit of {limit}")]
    TooLarge { p: usize, limit: usize },
    #[error("no nondegenerate KKT point found among the enumerated active sets")]
    NoCandidate,
    #[error("invalid quadratic program: {0}")]
    InvalidQp(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// `minimize 0.5 x'Hx + c'x  s.t.  E x = d,  A x <= b`, all dense.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseQp {
    n: usize,
    hessian: Vec<f64>,
    linear: Vec<f64>,
    equalities: Vec<(Vec<f64>, f64)>,
    inequalities: Vec<(Vec<f64>, f64)>,
}

impl DenseQp {
    /// `hessian` is row-major `n x n` with `n = linear.len()`; constraint rows are `(a, b)`.
    pub fn new(
        hessian: Vec<f64>,
        linear: Vec<f64>,
        equalities: Vec<(Vec<f64>, f64)>,
        inequalities: Vec<(Vec<f64>, f64)>,
    ) -> Result<Self, OracleError> {
        let n = linear.len();
        if hessian.len() != n * n {
            return Err(OracleError::InvalidQp(format!("hessian must have {} entries", n * n)));
        }
        if let Some((a, _)) = equalities.iter().chain(&inequalities).find(|(a, _)| a.len() != n) {
            return Err(OracleError::InvalidQp(format!(
                "constraint row of length {} in a program of dimension {n}",
                a.len()
            )));
        }
        Ok(Self { n, hessian, linear, equalities, inequalities })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn hessian(&self) -> &[f64] {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn equalities(&self) -> &[(Vec<f64>, f64)] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[(Vec<f64>, f64)] {
        &self.inequalities
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let h = DMatrix::from_row_slice(self.n, self.n, &self.hessian);
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&h * &xv)) + xv.dot(&DVector::from_column_slice(&self.linear))
    }

    /// The same program as `ConvexProgram`, with `h_i = a_i.x - d_i` and `g_j = a_j.x - b_j`.
    pub fn to_program(&self) -> Result<ConvexProgram, ProblemError> {
        let objective: FieldRef = Arc::new(Quadratic::new(self.hessian.clone(), self.linear.clone(), 0.0)?);
        let affine = |rows: &[(Vec<f64>, f64)]| {
            rows.iter()
                .map(|(a, b)| Arc::new(Affine::new(a.clone(), -b)) as FieldRef)
                .collect()
        };
        ConvexProgram::new(objective, affine(&self.equalities), affine(&self.inequalities))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
    /// Zero-based indices of the inequality constraints treated as active.
    pub active_set: Vec<usize>,
    pub value: f64,
}

/// Solves `qp` by enumerating inequality active sets of size `0..=max_active`.
pub fn solve_qp_exact(qp: &DenseQp, max_active: usize) -> Result<QpSolution, OracleError> {
    solve_enumerated(qp, 0, max_active)
}

fn solve_enumerated(qp: &DenseQp, min_active: usize, max_active: usize) -> Result<QpSolution, OracleError> {
    let p = qp.inequalities.len();
    let mut best: Option<QpSolution> = None;
    for size in min_active..=max_active.min(p) {
        for subset in Combinations::new(p, size) {
            let Some(candidate) = solve_candidate(qp, &subset) else {
                continue;
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    let tie = (candidate.value - b.value).abs() <= 1e-12 * (1.0 + b.value.abs());
                    if tie {
                        candidate.active_set < b.active_set
                    } else {
                        candidate.value < b.value
                    }
                }
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    best.ok_or(OracleError::NoCandidate)
}

fn solve_candidate(qp: &DenseQp, active: &[usize]) -> Option<QpSolution> {
    let n = qp.n;
    let m = qp.equalities.len();
    let k = active.len();
    let size = n + m + k;
    let mut kkt = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = qp.hessian[i * n + j];
        }
        rhs[i] = -qp.linear[i];
    }
    let rows = qp
        .equalities
        .iter()
        .chain(active.iter().map(|&i| &qp.inequalities[i]));
    for (r, (a, b)) in rows.enumerate() {
        for (j, &aj) in a.iter().enumerate() {
            kkt[(n + r, j)] = aj;
            kkt[(j, n + r)] = aj;
        }
        rhs[n + r] = *b;
    }

    let sv = kkt.clone().singular_values();
    let smax = sv.max();
    if !(smax > 0.0) || sv.min() <= SINGULAR_TOL * smax {
        return None;
    }
    let sol = kkt.lu().solve(&rhs)?;
    let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let lam: Vec<f64> = sol.rows(n, m).iter().copied().collect();
    let active_mu: Vec<f64> = sol.rows(n + m, k).iter().copied().collect();

    let mu_scale = 1.0 + active_mu.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if active_mu.iter().any(|&v| v < -FEASIBILITY_TOL * mu_scale) {
        return None;
    }
    for (a, b) in &qp.inequalities {
        let ax: f64 = a.iter().zip(&x).map(|(u, v)| u * v).sum();
        let scale = 1.0 + b.abs() + a.iter().zip(&x).map(|(u, v)| (u * v).abs()).sum::<f64>();
        if ax - b > FEASIBILITY_TOL * scale {
            return None;
        }
    }

    let mut mu = vec![0.0; qp.inequalities.len()];
    for (&i, &v) in active.iter().zip(&active_mu) {
        mu[i] = v.max(0.0);
    }
    let value = qp.objective_value(&x);
    Some(QpSolution { x, lam, mu, active_set: active.to_vec(), value })
}

/// Lexicographic `size`-subsets of `0..n`.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, size: usize) -> Self {
        let current = (size <= n).then(|| (0..size).collect());
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        let k = next.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                return Some(out);
            }
        }
        Some(out)
    }
}

/// Certified optimum of the SVM program.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub beta: [f64; 2],
    pub beta0: f64,
    pub mu: Vec<f64>,
    pub active_set: Vec<usize>,
    pub optimal_value: f64,
}

impl OracleSolution {
    /// Primal block `(beta1, beta2, beta0)`.
    pub fn primal(&self) -> Vec<f64> {
        vec![self.beta[0], self.beta[1], self.beta0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SvmOracleOutcome {
    Optimal(OracleSolution),
    /// No plane separates the classes.
    Infeasible,
}

/// The SVM program in dense form: `H = diag(1, 1, 0)`, rows `-y_i (x_i, 1) . z <= -1`.
pub fn svm_qp(ds: &SvmDataset) -> DenseQp {
    let ineq = ds
        .iter()
        .map(|(x, y)| {
            let s = y.sign();
            (vec![-s * x[0], -s * x[1], -s], -1.0)
        })
        .collect();
    DenseQp::new(
        vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0; 3],
        Vec::new(),
        ineq,
    )
    .expect("rows have dimension 3")
}

pub fn solve_exact(ds: &SvmDataset) -> Result<SvmOracleOutcome, OracleError> {
    solve_exact_with_limit(ds, DEFAULT_POINT_LIMIT)
}

pub fn solve_exact_with_limit(ds: &SvmDataset, limit: usize) -> Result<SvmOracleOutcome, OracleError> {
    if ds.len() > limit {
        return Err(OracleError::TooLarge { p: ds.len(), limit });
    }
    ds.require_two_classes()?;
    if !is_separable(ds) {
        return Ok(SvmOracleOutcome::Infeasible);
    }
    // Three unknowns: at most three linearly independent active rows, and
    // the empty set leaves beta0 undetermined.
    let qp = svm_qp(ds);
    let sol = solve_enumerated(&qp, 1, qp.dim() + 1)?;
    Ok(SvmOracleOutcome::Optimal(OracleSolution {
        beta: [sol.x[0], sol.x[1]],
        beta0: sol.x[2],
        mu: sol.mu,
        active_set: sol.active_set,
        optimal_value: sol.value,
    }))
}

/// Whether some `(beta, beta0)` satisfies `y_i (beta . x_i + beta0) >= 1` for
/// every point, decided by a feasibility LP.
pub fn is_separable(ds: &SvmDataset) -> bool {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let b1 = lp.add_var(0.0, free);
    let b2 = lp.add_var(0.0, free);
    let b0 = lp.add_var(0.0, free);
    for (x, y) in ds.iter() {
        let s = y.sign();
        lp.add_constraint([(b1, s * x[0]), (b2, s * x[1]), (b0, s)], ComparisonOp::Ge, 1.0);
    }
    lp.solve().is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::Label;

    fn ds(points: Vec<[f64; 2]>, labels: Vec<i64>) -> SvmDataset {
        SvmDataset::new(points, labels.into_iter().map(|l| Label::from_int(l).unwrap()).collect()).unwrap()
    }

    fn optimal(outcome: SvmOracleOutcome) -> OracleSolution {
        match outcome {
            SvmOracleOutcome::Optimal(s) => s,
            SvmOracleOutcome::Infeasible => panic!("expected an optimum"),
        }
    }

    #[test]
    fn combinations_are_lexicographic() {
        let all: Vec<_> = Combinations::new(4, 2).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(Combinations::new(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
        assert_eq!(Combinations::new(2, 3).count(), 0);
        assert_eq!(Combinations::new(25, 3).count(), 2300);
    }

    #[test]
    fn two_point_optimum() {
        let s = optimal(solve_exact(&ds(vec![[0.0, 1.0], [0.0, -1.0]], vec![1, -1])).unwrap());
        assert!((s.beta[0]).abs() < 1e-14 && (s.beta[1] - 1.0).abs() < 1e-14);
        assert!(s.beta0.abs() < 1e-14);
        assert!((s.mu[0] - 0.5).abs() < 1e-14 && (s.mu[1] - 0.5).abs() < 1e-14);
        assert!((s.optimal_value - 0.5).abs() < 1e-14);
        assert_eq!(s.active_set, vec![0, 1]);
    }

    #[test]
    fn axis_swapped_pair() {
        let s = optimal(solve_exact(&ds(vec![[1.0, 0.0], [-1.0, 0.0]], vec![1, -1])).unwrap());
        assert!((s.beta[0] - 1.0).abs() < 1e-14 && s.beta[1].abs() < 1e-14);
        assert!(s.beta0.abs() < 1e-14);
        assert!((s.mu[0] - 0.5).abs() < 1e-14 && (s.mu[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn overlapping_points_are_infeasible() {
        let d = ds(vec![[0.0, 0.0], [0.0, 0.0]], vec![1, -1]);
        assert!(!is_separable(&d));
        assert_eq!(solve_exact(&d).unwrap(), SvmOracleOutcome::Infeasible);
    }

    #[test]
    fn xor_is_not_separable() {
        let d = ds(vec![[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]], vec![1, 1, -1, -1]);
        assert!(!is_separable(&d));
    }

    #[test]
    fn guard_limit() {
        let points = (0..30).map(|i| [i as f64, 0.0]).collect();
        let labels = (0..30).map(|i| if i < 15 { -1 } else { 1 }).collect();
        let d = ds(points, labels);
        assert_eq!(solve_exact(&d), Err(OracleError::TooLarge { p: 30, limit: 25 }));
        assert!(is_separable(&d));
    }

    #[test]
    fn inactive_points_get_zero_multipliers() {
        let d = ds(vec![[0.0, 1.0], [0.0, 3.0], [0.0, -1.0], [2.0, -4.0]], vec![1, 1, -1, -1]);
        let s = optimal(solve_exact(&d).unwrap());
        assert_eq!(s.mu[1], 0.0);
        assert_eq!(s.mu[3], 0.0);
        assert!((s.beta[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn general_qp_with_equality() {
        // minimize 0.5|x|^2 - x1 - x2 s.t. x1 - x2 = 0, x1 <= 0.5
        let qp = DenseQp::new(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![-1.0, -1.0],
            vec![(vec![1.0, -1.0], 0.0)],
            vec![(vec![1.0, 0.0], 0.5)],
        )
        .unwrap();
        let s = solve_qp_exact(&qp, 3).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
        assert_eq!(s.active_set, vec![0]);
        let prog = qp.to_program().unwrap();
        let r = prog.kkt_residual(&s.x, &s.lam, &s.mu).unwrap();
        assert!(r.max() <= 1e-12, "{r:?}");
    }

    #[test]
    fn unconstrained_optimum_uses_empty_active_set() {
        let qp = DenseQp::new(vec![2.0], vec![-2.0], vec![], vec![(vec![1.0], 5.0)]).unwrap();
        let s = solve_qp_exact(&qp, 2).unwrap();
        assert_eq!(s.active_set, Vec::<usize>::new());
        assert!((s.x[0] - 1.0).abs() < 1e-14);
        assert_eq!(s.mu, vec![0.0]);
    }
}
