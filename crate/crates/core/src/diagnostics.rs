//! Trajectory-level checks: switched storage functions, the hybrid passivity
//! inequality, Lyapunov distance to a reference point and the storage audit at
//! multiplier switches.
//!
//! The storage function for switching state `sigma` is
//! `S_sigma = 0.5 * sum_{i not in sigma} tau_mu_i * mu_i'^2`, and the passivity
//! inequality compares its change between two visits of the same switching
//! state with the supplied power `int u_s . y_s dt`, where `u_s = x~'` and
//! `y_s = d/dt sum mu_i grad g_i(x~)`.

use std::collections::HashMap;

use thiserror::Error;

use crate::dynamics::{
    switching_set, DynState, DynamicsError, PortSignals, SwitchEvent, SwitchKind, SwitchState, TimeConstants,
    Termination, Trajectory,
};
use crate::problem::{expect_len, Block, ConvexProgram, KktResidual, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("trajectory has {0} samples; at least 2 are required")]
    TooFewSamples(usize),
    #[error("trajectory has {samples} samples but {derivatives} derivative samples")]
    MisalignedDerivatives { samples: usize, derivatives: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageSample {
    pub t: f64,
    pub sigma: SwitchState,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassivityReport {
    /// Pairs `(t_i, t_j)` visiting the same switching state with no visit in between.
    pub pairs_checked: usize,
    /// Worst `S(t_j) - S(t_i) - int u_s . y_s`; zero when no pair exists.
    pub max_violation: f64,
    pub tolerance_used: f64,
    pub passed: bool,
    /// Largest `|S(t_j) - S(t_i)|` over checked pairs.
    pub max_storage_change: f64,
    /// Largest `|int u_s . y_s|` over checked pairs.
    pub max_supply: f64,
}

/// Storage before and after a multiplier entered the zero set.
///
/// `s_before` is evaluated at the last sample strictly before the event
/// (left-hand value of `mu'`), `s_after` at the first sample at or after it.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditEntry {
    pub event: SwitchEvent,
    pub t_before: f64,
    pub s_before: f64,
    pub t_after: f64,
    pub s_after: f64,
    /// Set when the storage did not strictly decrease across the switch.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub termination: Termination,
    pub final_time: f64,
    pub steps: u64,
    pub residual: KktResidual,
}

/// `0.5 * sum_{i not in sigma} tau_mu_i * mu_rate_i^2`
pub fn storage_value(mu_rate: &[f64], sigma: &SwitchState, tau_mu: &[f64]) -> f64 {
    0.5 * mu_rate
        .iter()
        .zip(tau_mu)
        .enumerate()
        .filter(|(i, _)| !sigma.contains(*i))
        .map(|(_, (r, t))| t * r * r)
        .sum::<f64>()
}

fn check_aligned(traj: &Trajectory) -> Result<(), DiagnosticsError> {
    if traj.samples.len() != traj.derivatives.len() {
        return Err(DiagnosticsError::MisalignedDerivatives {
            samples: traj.samples.len(),
            derivatives: traj.derivatives.len(),
        });
    }
    Ok(())
}

fn sigma_at(prog: &ConvexProgram, s: &DynState, ports: &PortSignals) -> SwitchState {
    let g = prog.inequality_values(&ports.shifted_input(&s.x));
    switching_set(&s.mu, &g)
}

/// Switching state and storage value at every recorded sample.
pub fn storage_series(
    prog: &ConvexProgram,
    traj: &Trajectory,
    tc: &TimeConstants,
) -> Result<Vec<StorageSample>, DiagnosticsError> {
    check_aligned(traj)?;
    expect_len(Block::InequalityMultipliers, prog.num_inequalities(), tc.tau_mu().len())?;
    traj.samples
        .iter()
        .zip(&traj.derivatives)
        .map(|(s, d)| {
            prog.check_point(&s.x, &s.lam, &s.mu)?;
            let sigma = sigma_at(prog, s, &traj.ports);
            let value = storage_value(&d.mu, &sigma, tc.tau_mu());
            Ok(StorageSample { t: s.t, sigma, value })
        })
        .collect()
}

/// `y~ = sum mu_i grad g_i(x~)`
fn coupling_output(prog: &ConvexProgram, s: &DynState, ports: &PortSignals) -> Vec<f64> {
    let xt = ports.shifted_input(&s.x);
    let mut out = vec![0.0; prog.dim()];
    for (g, &m) in prog.inequalities().iter().zip(&s.mu) {
        g.accumulate_gradient(&xt, m, &mut out);
    }
    out
}

/// Default quadrature budget: `1e-3 * duration * max(1, sup|u_s| * sup|y_s|)`,
/// with `y_s` estimated by differences on the recorded grid.
pub fn default_quad_tol(prog: &ConvexProgram, traj: &Trajectory) -> f64 {
    let outputs: Vec<Vec<f64>> = traj
        .samples
        .iter()
        .map(|s| coupling_output(prog, s, &traj.ports))
        .collect();
    let u_max = traj.derivatives.iter().map(|d| norm2(&d.x)).fold(0.0, f64::max);
    let y_max = traj
        .samples
        .windows(2)
        .zip(outputs.windows(2))
        .map(|(s, y)| {
            let h = s[1].t - s[0].t;
            let diff: Vec<f64> = y[1].iter().zip(&y[0]).map(|(a, b)| a - b).collect();
            norm2(&diff) / h
        })
        .fold(0.0, f64::max);
    1e-3 * traj.duration() * (u_max * y_max).max(1.0)
}

/// Checks `S(t_j) - S(t_i) <= int_{t_i}^{t_j} u_s . y_s dt + quad_tol` for
/// every pair of consecutive visits of the same switching state.
///
/// The supplied power on `[t_k, t_{k+1}]` is integrated as
/// `0.5 (u_k + u_{k+1}) . (y~_{k+1} - y~_k)`, i.e. trapezoid in `u_s` with the
/// difference quotient of `y~` standing in for `y_s`. `quad_tol = None` uses
/// [`default_quad_tol`].
pub fn passivity_check(
    prog: &ConvexProgram,
    traj: &Trajectory,
    tc: &TimeConstants,
    quad_tol: Option<f64>,
) -> Result<PassivityReport, DiagnosticsError> {
    if traj.samples.len() < 2 {
        return Err(DiagnosticsError::TooFewSamples(traj.samples.len()));
    }
    let storage = storage_series(prog, traj, tc)?;
    let outputs: Vec<Vec<f64>> = traj
        .samples
        .iter()
        .map(|s| coupling_output(prog, s, &traj.ports))
        .collect();

    // supply[k] = integral from t_0 to t_k
    let mut supply = Vec::with_capacity(storage.len());
    supply.push(0.0);
    for k in 0..storage.len() - 1 {
        let u0 = &traj.derivatives[k].x;
        let u1 = &traj.derivatives[k + 1].x;
        let piece: f64 = (0..prog.dim())
            .map(|c| 0.5 * (u0[c] + u1[c]) * (outputs[k + 1][c] - outputs[k][c]))
            .sum();
        supply.push(supply[k] + piece);
    }

    let tolerance_used = quad_tol.unwrap_or_else(|| default_quad_tol(prog, traj));
    let mut last_visit: HashMap<&SwitchState, usize> = HashMap::new();
    let mut pairs_checked = 0;
    let mut max_violation = f64::NEG_INFINITY;
    let mut max_storage_change: f64 = 0.0;
    let mut max_supply: f64 = 0.0;
    for (j, sample) in storage.iter().enumerate() {
        if let Some(&i) = last_visit.get(&sample.sigma) {
            let delta_s = sample.value - storage[i].value;
            let supplied = supply[j] - supply[i];
            max_violation = max_violation.max(delta_s - supplied);
            max_storage_change = max_storage_change.max(delta_s.abs());
            max_supply = max_supply.max(supplied.abs());
            pairs_checked += 1;
        }
        last_visit.insert(&sample.sigma, j);
    }
    if pairs_checked == 0 {
        max_violation = 0.0;
    }
    Ok(PassivityReport {
        pairs_checked,
        max_violation,
        tolerance_used,
        passed: max_violation <= tolerance_used,
        max_storage_change,
        max_supply,
    })
}

/// `V = 0.5 * |state - reference|^2` weighted by the gains, per sample.
pub fn lyapunov_series(
    traj: &Trajectory,
    reference: &DynState,
    tc: &TimeConstants,
) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    expect_len(Block::Primal, tc.tau_x().len(), reference.x.len())?;
    expect_len(Block::EqualityMultipliers, tc.tau_lam().len(), reference.lam.len())?;
    expect_len(Block::InequalityMultipliers, tc.tau_mu().len(), reference.mu.len())?;
    traj.samples
        .iter()
        .map(|s| {
            expect_len(Block::Primal, reference.x.len(), s.x.len())?;
            expect_len(Block::EqualityMultipliers, reference.lam.len(), s.lam.len())?;
            expect_len(Block::InequalityMultipliers, reference.mu.len(), s.mu.len())?;
            Ok((s.t, lyapunov_value(s, reference, tc)))
        })
        .collect()
}

pub fn lyapunov_value(s: &DynState, reference: &DynState, tc: &TimeConstants) -> f64 {
    let weighted = |a: &[f64], b: &[f64], tau: &[f64]| -> f64 {
        a.iter().zip(b).zip(tau).map(|((x, y), t)| t * (x - y) * (x - y)).sum()
    };
    0.5 * (weighted(&s.x, &reference.x, tc.tau_x())
        + weighted(&s.lam, &reference.lam, tc.tau_lam())
        + weighted(&s.mu, &reference.mu, tc.tau_mu()))
}

/// For every `entered_zero_set` event whose constraint is satisfied at the
/// event, the storage immediately before and after the switch.
pub fn storage_switch_audit(
    prog: &ConvexProgram,
    traj: &Trajectory,
    tc: &TimeConstants,
) -> Result<Vec<AuditEntry>, DiagnosticsError> {
    if traj.events.is_empty() {
        return Ok(Vec::new());
    }
    let storage = storage_series(prog, traj, tc)?;
    let mut entries = Vec::new();
    for ev in traj.events.iter().filter(|e| e.kind == SwitchKind::EnteredZeroSet) {
        let after = traj.samples.partition_point(|s| s.t < ev.t);
        if after == 0 || after >= traj.samples.len() {
            continue;
        }
        let before = after - 1;
        let at_event = &traj.samples[after];
        let xt = traj.ports.shifted_input(&at_event.x);
        let Some(g) = prog.inequalities().get(ev.index) else {
            continue;
        };
        if g.value(&xt) > 0.0 {
            continue;
        }
        let (s_before, s_after) = (storage[before].value, storage[after].value);
        entries.push(AuditEntry {
            event: *ev,
            t_before: traj.samples[before].t,
            s_before,
            t_after: at_event.t,
            s_after,
            flagged: !(s_after < s_before),
        });
    }
    Ok(entries)
}

pub fn convergence_report(prog: &ConvexProgram, traj: &Trajectory) -> Result<ConvergenceReport, DiagnosticsError> {
    let last = traj.final_state();
    Ok(ConvergenceReport {
        termination: traj.termination,
        final_time: last.t,
        steps: traj.steps,
        residual: prog.kkt_residual(&last.x, &last.lam, &last.mu)?,
    })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
