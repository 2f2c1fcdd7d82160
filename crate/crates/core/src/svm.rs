//! Hard-margin linear SVM as a convex program.
//!
//! For labelled points `(x_i, y_i)` in the plane, `y_i` in `{+1, -1}`:
//!
//! ```text
//!     minimize     0.5 |beta|^2
//!     subject to   g_i(beta, beta0) = 1 - y_i (beta . x_i + beta0) <= 0
//! ```
//!
//! The program variable is `z = (beta1, beta2, beta0)`; the bias carries no
//! cost. At an equilibrium of the primal-dual flow `beta = sum mu_i y_i x_i`
//! and `sum mu_i y_i = 0`.

use std::sync::Arc;

use thiserror::Error;

use crate::dynamics::{projected_rate, DynState, DynamicsError};
use crate::problem::{Affine, ConvexProgram, FieldRef, LagrangianGradients, ProblemError, Quadratic};

/// Dual manifold tolerance on `|sum mu_i y_i|`.
pub const DUAL_MANIFOLD_TOL: f64 = 1e-9;

/// Default relative threshold for support-vector extraction.
pub const DEFAULT_SV_REL_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("dataset has only class {0}; both labels are required")]
    SingleClass(Label),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("margin is undefined for beta = 0")]
    ZeroNormal,
    #[error("expected {expected} multipliers, found {found}")]
    MultiplierCount { expected: usize, found: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_int(v: i64) -> Option<Self> {
        match v {
            1 => Some(Label::Positive),
            -1 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn as_int(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_int())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmDataset {
    points: Vec<[f64; 2]>,
    labels: Vec<Label>,
}

impl SvmDataset {
    pub fn new(points: Vec<[f64; 2]>, labels: Vec<Label>) -> Result<Self, SvmError> {
        if points.len() != labels.len() {
            return Err(SvmError::LengthMismatch { points: points.len(), labels: labels.len() });
        }
        if let Some(i) = points.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(SvmError::NonFinite(i));
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(positive, negative)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == Label::Positive).count();
        (pos, self.labels.len() - pos)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 2], Label)> + '_ {
        self.points.iter().zip(self.labels.iter().copied())
    }

    /// Errors unless the dataset has points of both classes.
    pub fn require_two_classes(&self) -> Result<(), SvmError> {
        match self.class_counts() {
            (0, 0) => Err(SvmError::Empty),
            (0, _) => Err(SvmError::SingleClass(Label::Negative)),
            (_, 0) => Err(SvmError::SingleClass(Label::Positive)),
            _ => Ok(()),
        }
    }

    fn check_multipliers(&self, mu: &[f64]) -> Result<(), SvmError> {
        if mu.len() == self.len() {
            Ok(())
        } else {
            Err(SvmError::MultiplierCount { expected: self.len(), found: mu.len() })
        }
    }
}

/// The plane `beta . x + beta0 = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperplane {
    pub beta: [f64; 2],
    pub beta0: f64,
}

impl Hyperplane {
    pub fn new(beta: [f64; 2], beta0: f64) -> Self {
        Self { beta, beta0 }
    }

    /// Reads `(beta1, beta2, beta0)` from the primal block of an SVM state.
    pub fn from_state(s: &DynState) -> Self {
        Self::from_primal(&s.x)
    }

    pub fn from_primal(z: &[f64]) -> Self {
        Self { beta: [z[0], z[1]], beta0: z[2] }
    }

    pub fn decision(&self, x: &[f64; 2]) -> f64 {
        self.beta[0] * x[0] + self.beta[1] * x[1] + self.beta0
    }

    pub fn norm(&self) -> f64 {
        self.beta[0].hypot(self.beta[1])
    }

    /// Width `2 / |beta|` between the supporting planes.
    pub fn margin(&self) -> Result<f64, SvmError> {
        let n = self.norm();
        if n > 0.0 {
            Ok(2.0 / n)
        } else {
            Err(SvmError::ZeroNormal)
        }
    }

    /// Sign of the decision function: `+1`, `-1`, or `0` on the plane.
    pub fn classify(&self, x: &[f64; 2]) -> i8 {
        let d = self.decision(x);
        if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        }
    }
}

pub fn margin(h: &Hyperplane) -> Result<f64, SvmError> {
    h.margin()
}

pub fn classify(h: &Hyperplane, x: &[f64; 2]) -> i8 {
    h.classify(x)
}

/// The SVM program over `z = (beta1, beta2, beta0)`, one inequality per point.
pub fn build_svm_program(ds: &SvmDataset) -> Result<ConvexProgram, SvmError> {
    ds.require_two_classes()?;
    let objective: FieldRef = Arc::new(Quadratic::new(
        vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0; 3],
        0.0,
    )?);
    let inequalities = ds
        .iter()
        .map(|(x, y)| {
            let s = y.sign();
            Arc::new(Affine::new(vec![-s * x[0], -s * x[1], -s], 1.0)) as FieldRef
        })
        .collect();
    Ok(ConvexProgram::new(objective, Vec::new(), inequalities)?)
}

/// `g_i = 1 - y_i (beta . x_i + beta0)` for every point.
pub fn constraint_values(ds: &SvmDataset, h: &Hyperplane) -> Vec<f64> {
    ds.iter().map(|(x, y)| 1.0 - y.sign() * h.decision(x)).collect()
}

/// `0.5 |beta|^2 + sum mu_i g_i(beta, beta0)`
pub fn svm_lagrangian(ds: &SvmDataset, h: &Hyperplane, mu: &[f64]) -> Result<f64, SvmError> {
    ds.check_multipliers(mu)?;
    let cost = 0.5 * (h.beta[0] * h.beta[0] + h.beta[1] * h.beta[1]);
    Ok(cost + constraint_values(ds, h).iter().zip(mu).map(|(g, m)| m * g).sum::<f64>())
}

/// Closed-form gradients of the SVM Lagrangian:
/// `dL/dbeta = beta - sum mu_i y_i x_i`, `dL/dbeta0 = -sum mu_i y_i`, `dL/dmu_i = g_i`.
pub fn svm_lagrangian_gradients(
    ds: &SvmDataset,
    h: &Hyperplane,
    mu: &[f64],
) -> Result<LagrangianGradients, SvmError> {
    ds.check_multipliers(mu)?;
    let weighted = reconstruct_beta(mu, ds);
    let bias: f64 = ds.labels.iter().zip(mu).map(|(y, m)| m * y.sign()).sum();
    Ok(LagrangianGradients {
        x: vec![h.beta[0] - weighted[0], h.beta[1] - weighted[1], -bias],
        lam: Vec::new(),
        mu: constraint_values(ds, h),
    })
}

/// Right-hand sides of the SVM primal-dual laws with unit gains:
/// `beta' = -(beta - sum mu_i y_i x_i)`, `beta0' = sum mu_i y_i`, `mu_i' = (g_i)^+_mu`.
pub fn svm_rates(ds: &SvmDataset, h: &Hyperplane, mu: &[f64]) -> Result<(Vec<f64>, Vec<f64>), DynamicsError> {
    let grads = svm_lagrangian_gradients(ds, h, mu).map_err(|e| match e {
        SvmError::Problem(p) => DynamicsError::Problem(p),
        other => DynamicsError::InvalidConfig(other.to_string()),
    })?;
    let primal = grads.x.iter().map(|g| -g).collect();
    let dual = grads
        .mu
        .iter()
        .zip(mu)
        .enumerate()
        .map(|(i, (&g, &m))| {
            projected_rate(g, m).map_err(|_| DynamicsError::OutsideOrthant { index: Some(i), value: m })
        })
        .collect::<Result<_, _>>()?;
    Ok((primal, dual))
}

/// Dual objective `sum mu_i - 0.5 |sum mu_i y_i x_i|^2`, defined only on the
/// manifold `sum mu_i y_i = 0` (off it the infimum over `beta0` is `-inf`).
pub fn svm_dual_objective(mu: &[f64], ds: &SvmDataset) -> Option<f64> {
    if mu.len() != ds.len() {
        return None;
    }
    let balance: f64 = ds.labels.iter().zip(mu).map(|(y, m)| m * y.sign()).sum();
    if balance.abs() > DUAL_MANIFOLD_TOL {
        return None;
    }
    let w = reconstruct_beta(mu, ds);
    Some(mu.iter().sum::<f64>() - 0.5 * (w[0] * w[0] + w[1] * w[1]))
}

/// `0.5 |beta|^2`
pub fn primal_objective(h: &Hyperplane) -> f64 {
    0.5 * (h.beta[0] * h.beta[0] + h.beta[1] * h.beta[1])
}

/// `sum mu_i y_i x_i`
pub fn reconstruct_beta(mu: &[f64], ds: &SvmDataset) -> [f64; 2] {
    ds.iter().zip(mu).fold([0.0, 0.0], |acc, ((x, y), m)| {
        let w = m * y.sign();
        [acc[0] + w * x[0], acc[1] + w * x[1]]
    })
}

/// Zero-based indices with `mu_i > rel_eps * max(mu)`.
pub fn support_vectors(mu: &[f64], rel_eps: f64) -> Vec<usize> {
    let max = mu.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let threshold = rel_eps * max;
    mu.iter()
        .enumerate()
        .filter(|(_, &m)| m > threshold)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> SvmDataset {
        SvmDataset::new(vec![[0.0, 1.0], [0.0, -1.0]], vec![Label::Positive, Label::Negative]).unwrap()
    }

    #[test]
    fn program_shape() {
        let prog = build_svm_program(&two_point()).unwrap();
        assert_eq!((prog.dim(), prog.num_equalities(), prog.num_inequalities()), (3, 0, 2));
        assert_eq!(prog.inequality_values(&[0.0; 3]), vec![1.0, 1.0]);
        assert_eq!(prog.objective().value(&[3.0, 4.0, 7.0]), 12.5);
    }

    #[test]
    fn single_class_is_rejected() {
        let ds = SvmDataset::new(vec![[0.0, 1.0], [1.0, 1.0]], vec![Label::Positive; 2]).unwrap();
        assert_eq!(build_svm_program(&ds).unwrap_err(), SvmError::SingleClass(Label::Positive));
        let empty = SvmDataset::new(vec![], vec![]).unwrap();
        assert_eq!(build_svm_program(&empty).unwrap_err(), SvmError::Empty);
        assert!(SvmDataset::new(vec![[0.0, 0.0]], vec![]).is_err());
        assert!(SvmDataset::new(vec![[f64::NAN, 0.0]], vec![Label::Positive]).is_err());
    }

    #[test]
    fn dual_objective_cases() {
        let ds = two_point();
        assert_eq!(svm_dual_objective(&[0.5, 0.5], &ds), Some(0.5));
        assert_eq!(svm_dual_objective(&[0.0, 0.0], &ds), Some(0.0));
        assert_eq!(svm_dual_objective(&[1.0, 0.0], &ds), None);
    }

    #[test]
    fn margin_cases() {
        assert_eq!(Hyperplane::new([0.0, 1.0], 0.0).margin().unwrap(), 2.0);
        assert!((Hyperplane::new([3.0, 4.0], 0.0).margin().unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(Hyperplane::new([0.0, 0.0], 1.0).margin(), Err(SvmError::ZeroNormal));
    }

    #[test]
    fn support_vector_cases() {
        assert_eq!(support_vectors(&[0.5, 0.5], DEFAULT_SV_REL_EPS), vec![0, 1]);
        assert!(support_vectors(&[0.0, 0.0, 0.0], DEFAULT_SV_REL_EPS).is_empty());
        assert_eq!(support_vectors(&[1.0, 1e-9, 0.2], DEFAULT_SV_REL_EPS), vec![0, 2]);
    }

    #[test]
    fn reconstruct_beta_cases() {
        let ds = two_point();
        assert_eq!(reconstruct_beta(&[0.5, 0.5], &ds), [0.0, 1.0]);
        assert_eq!(reconstruct_beta(&[0.0, 0.0], &ds), [0.0, 0.0]);
    }

    #[test]
    fn classify_cases() {
        let h = Hyperplane::new([0.0, 1.0], 0.0);
        assert_eq!(h.classify(&[0.0, 5.0]), 1);
        assert_eq!(h.classify(&[3.0, 0.0]), 0);
        assert_eq!(h.classify(&[0.0, -2.0]), -1);
        assert_eq!(Hyperplane::new([0.0, 1.0], -3.0).classify(&[0.0, 6.0]), 1);
    }

    #[test]
    fn closed_form_laws_agree_with_generic_program() {
        let ds = two_point();
        let prog = build_svm_program(&ds).unwrap();
        let z = [0.3, -0.7, 0.2];
        let mu = [0.4, 1.1];
        let h = Hyperplane::from_primal(&z);
        let generic = prog.lagrangian_gradients(&z, &[], &mu).unwrap();
        let closed = svm_lagrangian_gradients(&ds, &h, &mu).unwrap();
        for (a, b) in generic.x.iter().zip(&closed.x) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in generic.mu.iter().zip(&closed.mu) {
            assert!((a - b).abs() < 1e-14);
        }
        let l = prog.lagrangian(&z, &[], &mu).unwrap();
        assert!((l - svm_lagrangian(&ds, &h, &mu).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn rates_at_origin() {
        let ds = two_point();
        let (primal, dual) = svm_rates(&ds, &Hyperplane::new([0.0, 0.0], 0.0), &[0.0, 0.0]).unwrap();
        assert_eq!(primal, vec![0.0, 0.0, 0.0]);
        assert_eq!(dual, vec![1.0, 1.0]);
    }
}
