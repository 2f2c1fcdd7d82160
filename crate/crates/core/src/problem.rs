//! Convex programs in standard form and their first-order objects.
//!
//! A [`ConvexProgram`] is
//!
//! ```text
//!     minimize     f(x)
//!     subject to   h_i(x)  = 0,   i = 1..m
//!                  g_j(x) <= 0,   j = 1..p
//! ```
//!
//! with every function given as a [`ScalarField`] (value plus exact gradient).
//! The Lagrangian is `L(x, lam, mu) = f(x) + sum lam_i h_i(x) + sum mu_j g_j(x)`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Which block of a primal-dual point (or of a program) a dimension error refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Primal,
    EqualityMultipliers,
    InequalityMultipliers,
    Objective,
    Equality(usize),
    Inequality(usize),
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::Primal => write!(f, "primal vector x"),
            Block::EqualityMultipliers => write!(f, "equality multipliers lambda"),
            Block::InequalityMultipliers => write!(f, "inequality multipliers mu"),
            Block::Objective => write!(f, "objective"),
            Block::Equality(i) => write!(f, "equality constraint {i}"),
            Block::Inequality(i) => write!(f, "inequality constraint {i}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch in {block}: expected {expected}, found {found}")]
    DimensionMismatch {
        block: Block,
        expected: usize,
        found: usize,
    },
    #[error("invalid field: {0}")]
    InvalidField(String),
}

/// A differentiable map `R^n -> R`.
///
/// Implementations must be stateless (or internally synchronized); programs are
/// shared across threads behind `Arc`.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Adds `weight * grad(x)` into `out`.
    fn accumulate_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]);

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.accumulate_gradient(x, 1.0, &mut out);
        out
    }
}

/// `a . x + b`
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl Affine {
    pub fn new(coeffs: Vec<f64>, offset: f64) -> Self {
        Self { coeffs, offset }
    }
}

impl ScalarField for Affine {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.offset
    }

    fn accumulate_gradient(&self, _x: &[f64], weight: f64, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.coeffs) {
            *o += weight * a;
        }
    }
}

/// `0.5 x' H x + c' x + r` with symmetric `H` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    n: usize,
    hessian: Vec<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl Quadratic {
    pub fn new(hessian: Vec<f64>, linear: Vec<f64>, constant: f64) -> Result<Self, ProblemError> {
        let n = linear.len();
        if hessian.len() != n * n {
            return Err(ProblemError::InvalidField(format!(
                "hessian has {} entries, expected {}",
                hessian.len(),
                n * n
            )));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (hessian[i * n + j], hessian[j * n + i]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(ProblemError::InvalidField(format!(
                        "hessian is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            hessian,
            linear,
            constant,
        })
    }

    pub fn hessian(&self) -> &[f64] {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }
}

impl ScalarField for Quadratic {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        for (i, row) in self.hessian.chunks_exact(self.n).enumerate() {
            quad += x[i] * dot(row, x);
        }
        0.5 * quad + dot(&self.linear, x) + self.constant
    }

    fn accumulate_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        for ((o, row), c) in out
            .iter_mut()
            .zip(self.hessian.chunks_exact(self.n))
            .zip(&self.linear)
        {
            *o += weight * (dot(row, x) + c);
        }
    }
}

/// A field given by a pair of closures.
pub struct FnField<F, G> {
    n: usize,
    value: F,
    gradient: G,
}

impl<F, G> FnField<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    /// `gradient` must overwrite its output slice with the gradient.
    pub fn new(n: usize, value: F, gradient: G) -> Self {
        Self { n, value, gradient }
    }
}

impl<F, G> ScalarField for FnField<F, G>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
    G: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn accumulate_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        let mut g = vec![0.0; self.n];
        (self.gradient)(x, &mut g);
        for (o, gi) in out.iter_mut().zip(g) {
            *o += weight * gi;
        }
    }
}

pub type FieldRef = Arc<dyn ScalarField>;

#[derive(Clone)]
pub struct ConvexProgram {
    dim: usize,
    objective: FieldRef,
    equalities: Vec<FieldRef>,
    inequalities: Vec<FieldRef>,
}

impl fmt::Debug for ConvexProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexProgram")
            .field("dim", &self.dim)
            .field("equalities", &self.equalities.len())
            .field("inequalities", &self.inequalities.len())
            .finish()
    }
}

/// The three blocks of the Lagrangian gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianGradients {
    /// `grad f + sum lam_i grad h_i + sum mu_j grad g_j`
    pub x: Vec<f64>,
    /// `h(x)`
    pub lam: Vec<f64>,
    /// `g(x)`
    pub mu: Vec<f64>,
}

/// Per-condition violations of the KKT system, each an infinity norm.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub equality_violation: f64,
    pub ineq_violation: f64,
    pub dual_negativity: f64,
    pub comp_slackness: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.equality_violation)
            .max(self.ineq_violation)
            .max(self.dual_negativity)
            .max(self.comp_slackness)
    }

    /// True when the point is accepted as `eps`-optimal.
    pub fn within(&self, eps: f64) -> bool {
        self.max() <= eps
    }
}

impl ConvexProgram {
    pub fn new(
        objective: FieldRef,
        equalities: Vec<FieldRef>,
        inequalities: Vec<FieldRef>,
    ) -> Result<Self, ProblemError> {
        let dim = objective.dim();
        if dim == 0 {
            return Err(ProblemError::InvalidField("objective has dimension 0".into()));
        }
        let check = |block: Block, field: &FieldRef| {
            if field.dim() != dim {
                Err(ProblemError::DimensionMismatch {
                    block,
                    expected: dim,
                    found: field.dim(),
                })
            } else {
                Ok(())
            }
        };
        for (i, h) in equalities.iter().enumerate() {
            check(Block::Equality(i), h)?;
        }
        for (i, g) in inequalities.iter().enumerate() {
            check(Block::Inequality(i), g)?;
        }
        Ok(Self {
            dim,
            objective,
            equalities,
            inequalities,
        })
    }

    /// Unconstrained program.
    pub fn unconstrained(objective: FieldRef) -> Result<Self, ProblemError> {
        Self::new(objective, Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn num_inequalities(&self) -> usize {
        self.inequalities.len()
    }

    pub fn objective(&self) -> &dyn ScalarField {
        self.objective.as_ref()
    }

    pub fn equalities(&self) -> &[FieldRef] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[FieldRef] {
        &self.inequalities
    }

    pub fn check_primal(&self, x: &[f64]) -> Result<(), ProblemError> {
        expect_len(Block::Primal, self.dim, x.len())
    }

    pub fn check_point(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> Result<(), ProblemError> {
        self.check_primal(x)?;
        expect_len(Block::EqualityMultipliers, self.equalities.len(), lam.len())?;
        expect_len(Block::InequalityMultipliers, self.inequalities.len(), mu.len())
    }

    pub fn equality_values(&self, x: &[f64]) -> Vec<f64> {
        self.equalities.iter().map(|h| h.value(x)).collect()
    }

    pub fn inequality_values(&self, x: &[f64]) -> Vec<f64> {
        self.inequalities.iter().map(|g| g.value(x)).collect()
    }

    pub fn lagrangian(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> Result<f64, ProblemError> {
        self.check_point(x, lam, mu)?;
        let mut value = self.objective.value(x);
        for (h, l) in self.equalities.iter().zip(lam) {
            value += l * h.value(x);
        }
        for (g, m) in self.inequalities.iter().zip(mu) {
            value += m * g.value(x);
        }
        Ok(value)
    }

    pub fn lagrangian_gradients(
        &self,
        x: &[f64],
        lam: &[f64],
        mu: &[f64],
    ) -> Result<LagrangianGradients, ProblemError> {
        self.check_point(x, lam, mu)?;
        let mut grad_x = vec![0.0; self.dim];
        self.objective.accumulate_gradient(x, 1.0, &mut grad_x);
        for (h, &l) in self.equalities.iter().zip(lam) {
            h.accumulate_gradient(x, l, &mut grad_x);
        }
        for (g, &m) in self.inequalities.iter().zip(mu) {
            g.accumulate_gradient(x, m, &mut grad_x);
        }
        Ok(LagrangianGradients {
            x: grad_x,
            lam: self.equality_values(x),
            mu: self.inequality_values(x),
        })
    }

    pub fn kkt_residual(&self, x: &[f64], lam: &[f64], mu: &[f64]) -> Result<KktResidual, ProblemError> {
        let grads = self.lagrangian_gradients(x, lam, mu)?;
        let g = &grads.mu;
        Ok(KktResidual {
            stationarity: inf_norm(grads.x.iter().copied()),
            equality_violation: inf_norm(grads.lam.iter().copied()),
            ineq_violation: inf_norm(g.iter().map(|&gi| gi.max(0.0))),
            dual_negativity: inf_norm(mu.iter().map(|&m| (-m).max(0.0))),
            comp_slackness: inf_norm(mu.iter().zip(g).map(|(m, gi)| m * gi)),
        })
    }
}

/// `dual_value - primal_value`; nonpositive under weak duality, zero under strong duality.
pub fn duality_gap(primal_value: f64, dual_value: f64) -> f64 {
    dual_value - primal_value
}

pub(crate) fn expect_len(block: Block, expected: usize, found: usize) -> Result<(), ProblemError> {
    if expected == found {
        Ok(())
    } else {
        Err(ProblemError::DimensionMismatch {
            block,
            expected,
            found,
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn inf_norm(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> FieldRef {
        Arc::new(Quadratic::new(vec![2.0], vec![0.0], 0.0).unwrap())
    }

    #[test]
    fn unconstrained_lagrangian_is_objective() {
        let prog = ConvexProgram::unconstrained(square()).unwrap();
        assert_eq!(prog.lagrangian(&[2.0], &[], &[]).unwrap(), 4.0);
        let grads = prog.lagrangian_gradients(&[3.0], &[], &[]).unwrap();
        assert_eq!(grads.x, vec![6.0]);
        assert!(grads.lam.is_empty() && grads.mu.is_empty());
    }

    #[test]
    fn lagrangian_with_one_inequality() {
        let g: FieldRef = Arc::new(Affine::new(vec![-1.0], 1.0));
        let prog = ConvexProgram::new(square(), vec![], vec![g]).unwrap();
        assert_eq!(prog.lagrangian(&[0.0], &[], &[3.0]).unwrap(), 3.0);
    }

    #[test]
    fn negative_multiplier_shows_up_as_dual_negativity() {
        let g: FieldRef = Arc::new(Affine::new(vec![-1.0], 1.0));
        let prog = ConvexProgram::new(square(), vec![], vec![g.clone(), g]).unwrap();
        let r = prog.kkt_residual(&[1.0], &[], &[-0.1, 0.0]).unwrap();
        assert_eq!(r.dual_negativity, 0.1);
    }

    #[test]
    fn dimension_errors_name_the_block() {
        let g: FieldRef = Arc::new(Affine::new(vec![-1.0], 1.0));
        let prog = ConvexProgram::new(square(), vec![], vec![g]).unwrap();
        let err = prog.lagrangian(&[1.0], &[], &[1.0, 2.0]).unwrap_err();
        assert_eq!(
            err,
            ProblemError::DimensionMismatch {
                block: Block::InequalityMultipliers,
                expected: 1,
                found: 2
            }
        );
        assert!(err.to_string().contains("inequality multipliers"));
        let err = prog.kkt_residual(&[1.0, 2.0], &[], &[1.0]).unwrap_err();
        assert!(err.to_string().contains("primal vector"));

        let bad: FieldRef = Arc::new(Affine::new(vec![1.0, 1.0], 0.0));
        let err = ConvexProgram::new(square(), vec![bad], vec![]).unwrap_err();
        assert!(err.to_string().contains("equality constraint 0"));
    }

    #[test]
    fn quadratic_rejects_asymmetric_hessian() {
        assert!(Quadratic::new(vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 0.0], 0.0).is_err());
        assert!(Quadratic::new(vec![1.0, 2.0], vec![0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn fn_field_matches_closed_form() {
        let f = FnField::new(
            2,
            |x: &[f64]| x[0].sin() + x[0] * x[1],
            |x: &[f64], g: &mut [f64]| {
                g[0] = x[0].cos() + x[1];
                g[1] = x[0];
            },
        );
        let g = f.gradient(&[0.0, 2.0]);
        assert_eq!(g, vec![3.0, 0.0]);
        assert_eq!(f.value(&[0.0, 2.0]), 0.0);
    }

    #[test]
    fn duality_gap_arithmetic() {
        assert_eq!(duality_gap(0.5, 0.5), 0.0);
        assert_eq!(duality_gap(1.0, 0.25), -0.75);
    }
}
