//! Saddle-point dynamics with switched inequality multipliers.
//!
//! ```text
//!     -tau_x  x'   = grad f(x) + sum lam_i grad h_i(x) + sum mu_j grad g_j(x~) + v
//!      tau_lam lam' = h(x)
//!      tau_mu  mu'  = (g(x~))^+_mu,          x~ = x + v~
//! ```
//!
//! With both ports `v`, `v~` at zero this is the plain primal-dual gradient
//! flow. Integration is explicit Euler; a multiplier pushed below zero by a
//! step is clamped to exactly zero, which keeps the multipliers in the
//! nonnegative orthant and makes `mu_j == 0` an attainable, exactly testable
//! condition for the switching signal.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::problem::{expect_len, inf_norm, Block, ConvexProgram, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("multiplier {} = {value} left the nonnegative orthant", .index.map_or("?".to_string(), |i| i.to_string()))]
    OutsideOrthant { index: Option<usize>, value: f64 },
    #[error("time constants must be finite and strictly positive ({block} entry {index} = {value})")]
    InvalidTimeConstant { block: Block, index: usize, value: f64 },
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("invalid integration config: {0}")]
    InvalidConfig(String),
    #[error("state diverged at t = {t}: infinity norm {norm} exceeds bound {bound}")]
    Divergence { t: f64, norm: f64, bound: f64 },
}

/// Stacked primal-dual point `(x, lam, mu)` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DynState {
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
    pub t: f64,
}

impl DynState {
    pub fn new(x: Vec<f64>, lam: Vec<f64>, mu: Vec<f64>) -> Self {
        Self { x, lam, mu, t: 0.0 }
    }

    /// The all-zeros state for `prog` at `t = 0`.
    pub fn zeros(prog: &ConvexProgram) -> Self {
        Self::new(
            vec![0.0; prog.dim()],
            vec![0.0; prog.num_equalities()],
            vec![0.0; prog.num_inequalities()],
        )
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(self.x.iter().chain(&self.lam).chain(&self.mu).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.lam).chain(&self.mu).all(|v| v.is_finite())
    }

    fn check_dims(&self, prog: &ConvexProgram) -> Result<(), ProblemError> {
        prog.check_point(&self.x, &self.lam, &self.mu)
    }
}

/// Diagonal gains `tau_x`, `tau_lam`, `tau_mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeConstants {
    tau_x: Vec<f64>,
    tau_lam: Vec<f64>,
    tau_mu: Vec<f64>,
}

impl TimeConstants {
    pub fn new(tau_x: Vec<f64>, tau_lam: Vec<f64>, tau_mu: Vec<f64>) -> Result<Self, DynamicsError> {
        for (block, taus) in [
            (Block::Primal, &tau_x),
            (Block::EqualityMultipliers, &tau_lam),
            (Block::InequalityMultipliers, &tau_mu),
        ] {
            if let Some((index, &value)) = taus
                .iter()
                .enumerate()
                .find(|(_, &v)| !(v.is_finite() && v > 0.0))
            {
                return Err(DynamicsError::InvalidTimeConstant { block, index, value });
            }
        }
        Ok(Self { tau_x, tau_lam, tau_mu })
    }

    pub fn ones(prog: &ConvexProgram) -> Self {
        Self::uniform(prog, 1.0, 1.0, 1.0).expect("unit gains are valid")
    }

    /// The same gain on every entry of a block.
    pub fn uniform(prog: &ConvexProgram, x: f64, lam: f64, mu: f64) -> Result<Self, DynamicsError> {
        Self::new(
            vec![x; prog.dim()],
            vec![lam; prog.num_equalities()],
            vec![mu; prog.num_inequalities()],
        )
    }

    pub fn tau_x(&self) -> &[f64] {
        &self.tau_x
    }

    pub fn tau_lam(&self) -> &[f64] {
        &self.tau_lam
    }

    pub fn tau_mu(&self) -> &[f64] {
        &self.tau_mu
    }

    /// Every gain multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, DynamicsError> {
        let s = |v: &[f64]| v.iter().map(|t| t * factor).collect();
        Self::new(s(&self.tau_x), s(&self.tau_lam), s(&self.tau_mu))
    }

    fn check_dims(&self, prog: &ConvexProgram) -> Result<(), ProblemError> {
        expect_len(Block::Primal, prog.dim(), self.tau_x.len())?;
        expect_len(Block::EqualityMultipliers, prog.num_equalities(), self.tau_lam.len())?;
        expect_len(Block::InequalityMultipliers, prog.num_inequalities(), self.tau_mu.len())
    }
}

/// Step sizes of the discrete primal-dual iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSizes {
    pub eta_x: Vec<f64>,
    pub eta_lam: Vec<f64>,
    pub eta_mu: Vec<f64>,
}

impl StepSizes {
    /// `eta = dt * tau^-1`, the step sizes under which the discrete iteration
    /// coincides with an Euler step of length `dt`.
    pub fn from_time_constants(tc: &TimeConstants, dt: f64) -> Self {
        let eta = |taus: &[f64]| taus.iter().map(|t| dt * t.recip()).collect();
        Self {
            eta_x: eta(&tc.tau_x),
            eta_lam: eta(&tc.tau_lam),
            eta_mu: eta(&tc.tau_mu),
        }
    }
}

/// The switching signal: indices with `mu_i == 0` and `g_i <= 0`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SwitchState(BTreeSet<usize>);

impl SwitchState {
    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<usize> for SwitchState {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// External inputs of the interconnection: `v` enters the primal rate, `v~`
/// shifts the point at which the inequality constraints are evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct PortSignals {
    pub v: Vec<f64>,
    pub vtilde: Vec<f64>,
}

impl PortSignals {
    pub fn zero(n: usize) -> Self {
        Self {
            v: vec![0.0; n],
            vtilde: vec![0.0; n],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().chain(&self.vtilde).all(|&p| p == 0.0)
    }

    fn check_dims(&self, prog: &ConvexProgram) -> Result<(), ProblemError> {
        expect_len(Block::Primal, prog.dim(), self.v.len())?;
        expect_len(Block::Primal, prog.dim(), self.vtilde.len())
    }

    /// `x~ = x + v~`
    pub fn shifted_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.vtilde).map(|(a, b)| a + b).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchKind {
    EnteredZeroSet,
    LeftZeroSet,
}

impl SwitchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SwitchKind::EnteredZeroSet => "entered_zero_set",
            SwitchKind::LeftZeroSet => "left_zero_set",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "entered_zero_set" => Some(SwitchKind::EnteredZeroSet),
            "left_zero_set" => Some(SwitchKind::LeftZeroSet),
            _ => None,
        }
    }
}

impl fmt::Display for SwitchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A multiplier crossing the `mu_i = 0` boundary. `index` is zero-based.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEvent {
    pub t: f64,
    pub index: usize,
    pub kind: SwitchKind,
}

/// Time derivative of a [`DynState`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateDerivative {
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
}

impl StateDerivative {
    pub fn is_zero(&self) -> bool {
        self.x.iter().chain(&self.lam).chain(&self.mu).all(|&d| d == 0.0)
    }

    pub fn inf_norm(&self) -> f64 {
        inf_norm(self.x.iter().chain(&self.lam).chain(&self.mu).copied())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationConfig {
    pub dt: f64,
    /// Integration horizon measured from the initial state's time.
    pub max_time: f64,
    /// Stop once the KKT infinity-residual drops to this value. `None` runs to `max_time`.
    pub kkt_tol: Option<f64>,
    /// Record (and test for convergence) every this many steps.
    pub record_every: usize,
    pub blowup_bound: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_time: 1000.0,
            kkt_tol: Some(1e-6),
            record_every: 10,
            blowup_bound: 1e8,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::NonPositiveStep(self.dt));
        }
        if !(self.max_time >= 0.0 && self.max_time.is_finite()) {
            return Err(DynamicsError::InvalidConfig(format!(
                "max_time must be finite and nonnegative, got {}",
                self.max_time
            )));
        }
        if let Some(tol) = self.kkt_tol {
            if !(tol > 0.0) {
                return Err(DynamicsError::InvalidConfig(format!(
                    "kkt_tol must be positive, got {tol}"
                )));
            }
        }
        if self.record_every == 0 {
            return Err(DynamicsError::InvalidConfig("record_every must be at least 1".into()));
        }
        if !(self.blowup_bound > 0.0) {
            return Err(DynamicsError::InvalidConfig(format!(
                "blowup_bound must be positive, got {}",
                self.blowup_bound
            )));
        }
        Ok(())
    }

    fn total_steps(&self) -> u64 {
        if self.max_time <= 0.0 {
            0
        } else {
            (self.max_time / self.dt - 1e-9).ceil() as u64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Termination {
    Converged { residual: f64 },
    MaxTime,
}

impl Termination {
    pub fn is_converged(&self) -> bool {
        matches!(self, Termination::Converged { .. })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged { .. } => "converged",
            Termination::MaxTime => "max_time",
        }
    }
}

/// Recorded samples of an integration run.
///
/// Besides every `record_every`-th step, the states on both sides of every
/// step that produced a [`SwitchEvent`] are recorded, so each event has an
/// exact before/after pair in `samples`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<DynState>,
    /// `derivatives[k]` is the vector field at `samples[k]`.
    pub derivatives: Vec<StateDerivative>,
    pub events: Vec<SwitchEvent>,
    pub ports: PortSignals,
    pub termination: Termination,
    /// Euler steps taken.
    pub steps: u64,
}

impl Trajectory {
    pub fn final_state(&self) -> &DynState {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// `(g)^+_mu` for a single constraint: `g` while the multiplier is positive,
/// `max(0, g)` on the boundary.
pub fn projected_rate(g: f64, mu: f64) -> Result<f64, DynamicsError> {
    if mu > 0.0 {
        Ok(g)
    } else if mu == 0.0 {
        Ok(g.max(0.0))
    } else {
        Err(DynamicsError::OutsideOrthant { index: None, value: mu })
    }
}

pub fn switching_set(mu: &[f64], g: &[f64]) -> SwitchState {
    mu.iter()
        .zip(g)
        .enumerate()
        .filter(|(_, (&m, &gi))| m == 0.0 && gi <= 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// The switching signal at `s`, with the constraints evaluated at the port-shifted input.
pub fn switching_state_at(
    prog: &ConvexProgram,
    s: &DynState,
    ports: &PortSignals,
) -> Result<SwitchState, DynamicsError> {
    s.check_dims(prog)?;
    ports.check_dims(prog)?;
    let g = prog.inequality_values(&ports.shifted_input(&s.x));
    Ok(switching_set(&s.mu, &g))
}

/// Right-hand sides before division by the gains.
struct RawRates {
    grad_x: Vec<f64>,
    h: Vec<f64>,
    proj_g: Vec<f64>,
}

fn raw_rates(prog: &ConvexProgram, s: &DynState, ports: &PortSignals) -> Result<RawRates, DynamicsError> {
    s.check_dims(prog)?;
    ports.check_dims(prog)?;
    let shifted;
    let xt: &[f64] = if ports.is_zero() {
        &s.x
    } else {
        shifted = ports.shifted_input(&s.x);
        &shifted
    };

    let mut grad_x = vec![0.0; prog.dim()];
    prog.objective().accumulate_gradient(&s.x, 1.0, &mut grad_x);
    for (h, &l) in prog.equalities().iter().zip(&s.lam) {
        h.accumulate_gradient(&s.x, l, &mut grad_x);
    }
    let mut proj_g = Vec::with_capacity(s.mu.len());
    for (i, (g, &m)) in prog.inequalities().iter().zip(&s.mu).enumerate() {
        g.accumulate_gradient(xt, m, &mut grad_x);
        let rate = projected_rate(g.value(xt), m).map_err(|_| DynamicsError::OutsideOrthant {
            index: Some(i),
            value: m,
        })?;
        proj_g.push(rate);
    }
    if !ports.is_zero() {
        for (gx, v) in grad_x.iter_mut().zip(&ports.v) {
            *gx += v;
        }
    }
    Ok(RawRates {
        grad_x,
        h: prog.equality_values(&s.x),
        proj_g,
    })
}

pub fn vector_field(
    prog: &ConvexProgram,
    s: &DynState,
    tc: &TimeConstants,
    ports: &PortSignals,
) -> Result<StateDerivative, DynamicsError> {
    tc.check_dims(prog)?;
    let raw = raw_rates(prog, s, ports)?;
    Ok(StateDerivative {
        x: raw.grad_x.iter().zip(&tc.tau_x).map(|(g, t)| -(t.recip() * g)).collect(),
        lam: raw.h.iter().zip(&tc.tau_lam).map(|(h, t)| t.recip() * h).collect(),
        mu: raw.proj_g.iter().zip(&tc.tau_mu).map(|(g, t)| t.recip() * g).collect(),
    })
}

fn step_to(
    prog: &ConvexProgram,
    s: &DynState,
    eta: &StepSizes,
    ports: &PortSignals,
    t_next: f64,
) -> Result<(DynState, Vec<SwitchEvent>), DynamicsError> {
    let raw = raw_rates(prog, s, ports)?;
    let x = s.x.iter().zip(&eta.eta_x).zip(&raw.grad_x).map(|((x, e), g)| x - e * g).collect();
    let lam = s.lam.iter().zip(&eta.eta_lam).zip(&raw.h).map(|((l, e), h)| l + e * h).collect();
    let mut events = Vec::new();
    let mu = s
        .mu
        .iter()
        .zip(&eta.eta_mu)
        .zip(&raw.proj_g)
        .enumerate()
        .map(|(index, ((&old, e), g))| {
            let mut new = old + e * g;
            if new < 0.0 {
                new = 0.0;
            }
            if old > 0.0 && new == 0.0 {
                events.push(SwitchEvent { t: t_next, index, kind: SwitchKind::EnteredZeroSet });
            } else if old == 0.0 && new > 0.0 {
                events.push(SwitchEvent { t: t_next, index, kind: SwitchKind::LeftZeroSet });
            }
            new
        })
        .collect();
    Ok((DynState { x, lam, mu, t: t_next }, events))
}

/// One explicit Euler step of length `dt`, followed by clamping negative
/// multipliers to zero. Returns the new state and the boundary crossings of the step.
pub fn euler_step(
    prog: &ConvexProgram,
    s: &DynState,
    tc: &TimeConstants,
    dt: f64,
    ports: &PortSignals,
) -> Result<(DynState, Vec<SwitchEvent>), DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    tc.check_dims(prog)?;
    step_to(prog, s, &StepSizes::from_time_constants(tc, dt), ports, s.t + dt)
}

/// The discrete primal-dual gradient iteration
///
/// ```text
///     x   <- x   - eta_x   * grad_x L
///     lam <- lam + eta_lam * grad_lam L
///     mu  <- mu  + eta_mu  * (grad_mu L)^+_mu
/// ```
///
/// taken literally: no clamping, no ports, time unchanged.
pub fn discrete_update(prog: &ConvexProgram, s: &DynState, eta: &StepSizes) -> Result<DynState, DynamicsError> {
    let grads = prog.lagrangian_gradients(&s.x, &s.lam, &s.mu)?;
    let x = s.x.iter().zip(&eta.eta_x).zip(&grads.x).map(|((x, e), g)| x - e * g).collect();
    let lam = s.lam.iter().zip(&eta.eta_lam).zip(&grads.lam).map(|((l, e), h)| l + e * h).collect();
    let mu = s
        .mu
        .iter()
        .zip(&eta.eta_mu)
        .zip(&grads.mu)
        .map(|((&m, e), &g)| projected_rate(g, m).map(|r| m + e * r))
        .collect::<Result<_, _>>()?;
    Ok(DynState { x, lam, mu, t: s.t })
}

/// Integrates from `s0` until the KKT residual test passes or the horizon is reached.
pub fn integrate(
    prog: &ConvexProgram,
    s0: &DynState,
    tc: &TimeConstants,
    ports: &PortSignals,
    cfg: &IntegrationConfig,
) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    tc.check_dims(prog)?;
    s0.check_dims(prog)?;
    ports.check_dims(prog)?;
    if let Some((index, &value)) = s0.mu.iter().enumerate().find(|(_, &m)| !(m >= 0.0)) {
        return Err(DynamicsError::OutsideOrthant { index: Some(index), value });
    }

    let eta = StepSizes::from_time_constants(tc, cfg.dt);
    let total = cfg.total_steps();
    let mut traj = Trajectory {
        samples: Vec::new(),
        derivatives: Vec::new(),
        events: Vec::new(),
        ports: ports.clone(),
        termination: Termination::MaxTime,
        steps: 0,
    };
    let record = |traj: &mut Trajectory, s: &DynState| -> Result<(), DynamicsError> {
        traj.derivatives.push(vector_field(prog, s, tc, ports)?);
        traj.samples.push(s.clone());
        Ok(())
    };
    let converged = |s: &DynState| -> Result<Option<f64>, DynamicsError> {
        match cfg.kkt_tol {
            Some(tol) => {
                let r = prog.kkt_residual(&s.x, &s.lam, &s.mu)?.max();
                Ok((r <= tol).then_some(r))
            }
            None => Ok(None),
        }
    };

    let mut cur = s0.clone();
    record(&mut traj, &cur)?;
    if let Some(residual) = converged(&cur)? {
        traj.termination = Termination::Converged { residual };
        return Ok(traj);
    }

    let mut last_recorded = 0u64;
    for k in 1..=total {
        let t_next = s0.t + k as f64 * cfg.dt;
        let (next, events) = step_to(prog, &cur, &eta, ports, t_next)?;
        let norm = next.inf_norm();
        if !(norm <= cfg.blowup_bound) {
            return Err(DynamicsError::Divergence { t: t_next, norm, bound: cfg.blowup_bound });
        }
        let prev = std::mem::replace(&mut cur, next);
        traj.steps = k;

        if !events.is_empty() {
            if last_recorded != k - 1 {
                record(&mut traj, &prev)?;
            }
            traj.events.extend(events);
            record(&mut traj, &cur)?;
            last_recorded = k;
        }
        if k % cfg.record_every as u64 == 0 || k == total {
            if last_recorded != k {
                record(&mut traj, &cur)?;
                last_recorded = k;
            }
            if let Some(residual) = converged(&cur)? {
                traj.termination = Termination::Converged { residual };
                return Ok(traj);
            }
        }
    }
    Ok(traj)
}
