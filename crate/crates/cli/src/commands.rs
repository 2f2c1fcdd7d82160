use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use saddleflow::dataio::{self, TraceChannels, TraceData};
use saddleflow::diagnostics::{
    convergence_report, lyapunov_value, passivity_check, storage_series, storage_switch_audit,
};
use saddleflow::dynamics::{vector_field, DynState, PortSignals, SwitchEvent, TimeConstants};
use saddleflow::oracle::{self, SvmOracleOutcome, DEFAULT_POINT_LIMIT};
use saddleflow::svm::{
    constraint_values, primal_objective, reconstruct_beta, support_vectors, svm_dual_objective, DEFAULT_SV_REL_EPS,
};
use saddleflow::{
    build_svm_program, integrate, ConvexProgram, Hyperplane, Label, SvmDataset, Termination, Trajectory,
};

use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::plot;

pub const KKT_TOL: f64 = 1e-3;
/// Relative to `1 + |beta|_inf`.
pub const IDENTITY_TOL: f64 = 1e-3;
pub const COMP_SLACK_TOL: f64 = 1e-4;
pub const GAP_TOL: f64 = 1e-4;
pub const MARGIN_TOL: f64 = 1e-3;
pub const ORACLE_TOL: f64 = 1e-3;
/// Flagged audit entries listed individually in the check report.
const AUDIT_NOTE_LIMIT: usize = 20;

// stdout writes that tolerate a closed pipe
macro_rules! emit {
    ($($arg:tt)*) => {{
        let _ = std::io::Write::write_fmt(&mut std::io::stdout().lock(), format_args!($($arg)*));
    }};
}

macro_rules! say {
    ($($arg:tt)*) => {{
        emit!($($arg)*);
        emit!("\n");
    }};
}

fn join_indices(ix: &[usize]) -> String {
    ix.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ")
}

fn require_data(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.data
        .as_deref()
        .ok_or_else(|| CliError::Usage("no dataset given (--data or `data` in the config)".into()))
}

pub fn generate(cfg: &RunConfig, output: &Path) -> Result<i32, CliError> {
    let count = cfg.count.unwrap_or(300);
    let specs = dataio::table1_specs(count);
    let ds = dataio::generate_gaussian_classes(&specs, cfg.seed, true)?;
    dataio::write_dataset(output, &ds)?;
    say!("wrote {} points to {}", ds.len(), output.display());
    say!("seed = {}", cfg.seed);
    say!("separable = {}", oracle::is_separable(&ds));
    for label in [Label::Positive, Label::Negative] {
        match dataio::class_moments(&ds, label) {
            Some((m, c)) => say!(
                "class {label}: mean = ({:.4}, {:.4}) covariance = [[{:.4}, {:.4}], [{:.4}, {:.4}]]",
                m[0], m[1], c[0][0], c[0][1], c[1][0], c[1][1]
            ),
            None => say!("class {label}: too few points for moments"),
        }
    }
    Ok(exit::OK)
}

/// Human-readable summary of a finished run.
pub fn summary_text(ds: &SvmDataset, prog: &ConvexProgram, traj: &Trajectory) -> Result<String, CliError> {
    let report = convergence_report(prog, traj)?;
    let last = traj.final_state();
    let h = Hyperplane::from_state(last);
    let svs = support_vectors(&last.mu, DEFAULT_SV_REL_EPS);
    let primal = primal_objective(&h);
    let r = &report.residual;
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("termination", report.termination.as_str().into());
    kv("final_time", report.final_time.to_string());
    kv("steps", report.steps.to_string());
    kv("beta1", h.beta[0].to_string());
    kv("beta2", h.beta[1].to_string());
    kv("beta0", h.beta0.to_string());
    kv("margin", h.margin().map_or("undefined".into(), |m| m.to_string()));
    kv("support_vector_count", svs.len().to_string());
    kv("support_vectors", join_indices(&svs));
    kv("kkt_stationarity", r.stationarity.to_string());
    kv("kkt_ineq_violation", r.ineq_violation.to_string());
    kv("kkt_dual_negativity", r.dual_negativity.to_string());
    kv("kkt_comp_slackness", r.comp_slackness.to_string());
    kv("kkt_max", r.max().to_string());
    kv("primal_objective", primal.to_string());
    match svm_dual_objective(&last.mu, ds) {
        Some(d) => {
            kv("dual_objective", d.to_string());
            kv("duality_gap", saddleflow::problem::duality_gap(primal, d).to_string());
        }
        None => {
            kv("dual_objective", "undefined".into());
            kv("duality_gap", "undefined".into());
        }
    }
    Ok(s)
}

pub fn train(cfg: &RunConfig) -> Result<i32, CliError> {
    let data = require_data(cfg)?;
    let ds = dataio::read_dataset(data)?;
    ds.require_two_classes()?;
    if !oracle::is_separable(&ds) {
        return Err(CliError::InvalidData(format!(
            "{}: classes are not linearly separable, the hard-margin program is infeasible",
            data.display()
        )));
    }
    let prog = build_svm_program(&ds)?;
    let tc = cfg.time_constants(&prog)?;
    let s0 = DynState::zeros(&prog);
    let traj = integrate(&prog, &s0, &tc, &PortSignals::zero(prog.dim()), &cfg.integration)?;

    let reference = traj.final_state().clone();
    let channels = TraceChannels {
        lyapunov: traj.samples.iter().map(|s| lyapunov_value(s, &reference, &tc)).collect(),
        storage: storage_series(&prog, &traj, &tc)?.into_iter().map(|s| s.value).collect(),
        mu_indices: cfg.mu_columns.as_ref().map(|c| c.iter().map(|i| i - 1).collect()),
    };
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out_dir.display())))?;
    let trace_path = cfg.out_dir.join("trace.csv");
    let events_path = dataio::write_trace(&trace_path, &traj, &channels)?;
    let summary = summary_text(&ds, &prog, &traj)?;
    let summary_path = cfg.out_dir.join("summary.txt");
    fs::write(&summary_path, &summary).map_err(|e| CliError::Io(format!("{}: {e}", summary_path.display())))?;
    let cfg_path = cfg.out_dir.join("run.cfg");
    fs::write(&cfg_path, cfg.to_text()).map_err(|e| CliError::Io(format!("{}: {e}", cfg_path.display())))?;
    emit!("{summary}");
    say!("trace = {}", trace_path.display());
    say!("events = {}", events_path.display());
    if cfg.plot {
        let trace = dataio::read_trace(&trace_path)?;
        for p in plot::write_all(&cfg.out_dir, &ds, &trace, &traj.events)? {
            say!("plot = {}", p.display());
        }
    }
    if traj.termination.is_converged() {
        Ok(exit::OK)
    } else {
        eprintln!(
            "not converged: KKT tolerance not reached by t = {}",
            traj.final_state().t
        );
        Ok(exit::NOT_CONVERGED)
    }
}

/// Rebuilds a trajectory from a full trace; derivatives are re-evaluated.
pub fn trajectory_from_trace(
    prog: &ConvexProgram,
    tc: &TimeConstants,
    trace: &TraceData,
    events: Vec<SwitchEvent>,
) -> Result<Trajectory, CliError> {
    let p = prog.num_inequalities();
    if trace.mu_indices.len() != p || trace.mu_indices.iter().enumerate().any(|(k, &i)| k != i) {
        return Err(CliError::InvalidData(format!(
            "trace must carry all {p} multiplier columns mu_1..mu_{p} in order"
        )));
    }
    if trace.times.is_empty() {
        return Err(CliError::InvalidData("trace has no rows".into()));
    }
    let ports = PortSignals::zero(prog.dim());
    let mut samples = Vec::with_capacity(trace.times.len());
    let mut derivatives = Vec::with_capacity(trace.times.len());
    for (k, &t) in trace.times.iter().enumerate() {
        let mut s = DynState::new(trace.primal[k].to_vec(), Vec::new(), trace.mu[k].clone());
        s.t = t;
        derivatives.push(vector_field(prog, &s, tc, &ports).map_err(|e| {
            CliError::InvalidData(format!("trace row {} (t = {t}): {e}", k + 2))
        })?);
        samples.push(s);
    }
    Ok(Trajectory {
        samples,
        derivatives,
        events,
        ports,
        termination: Termination::MaxTime,
        steps: 0,
    })
}

struct Report {
    text: String,
    failures: usize,
}

impl Report {
    fn new() -> Self {
        let mut text = String::new();
        text.push_str("check,value,tolerance,status\n");
        Self { text, failures: 0 }
    }

    fn check(&mut self, name: &str, value: f64, tol: f64) {
        let ok = value <= tol;
        if !ok {
            self.failures += 1;
        }
        let _ = writeln!(self.text, "{name},{value:e},{tol:e},{}", if ok { "PASS" } else { "FAIL" });
    }

    fn skip(&mut self, name: &str, why: &str) {
        let _ = writeln!(self.text, "{name},,,SKIP ({why})");
    }

    fn note(&mut self, line: String) {
        let _ = writeln!(self.text, "# {line}");
    }
}

pub fn check(cfg: &RunConfig, use_oracle: bool, report_path: Option<&Path>) -> Result<i32, CliError> {
    let data = require_data(cfg)?;
    let trace_path: PathBuf = cfg
        .trace
        .clone()
        .ok_or_else(|| CliError::Usage("no trace given (--trace or `trace` in the config)".into()))?;
    let ds = dataio::read_dataset(data)?;
    ds.require_two_classes()?;
    if use_oracle && ds.len() > DEFAULT_POINT_LIMIT {
        return Err(CliError::Usage(format!(
            "--oracle enumerates active sets and is limited to {DEFAULT_POINT_LIMIT} points; {} has {}",
            data.display(),
            ds.len()
        )));
    }
    let prog = build_svm_program(&ds)?;
    let tc = cfg.time_constants(&prog)?;
    let trace = dataio::read_trace(&trace_path)?;
    let events = dataio::read_events(&dataio::events_path(&trace_path))?;
    let traj = trajectory_from_trace(&prog, &tc, &trace, events)?;
    let last = traj.final_state();
    let h = Hyperplane::from_state(last);

    let mut rep = Report::new();
    let r = prog.kkt_residual(&last.x, &last.lam, &last.mu).map_err(|e| CliError::Internal(e.to_string()))?;
    rep.note(format!("final t = {}, samples = {}, events = {}", last.t, traj.samples.len(), traj.events.len()));
    rep.check("kkt_stationarity", r.stationarity, KKT_TOL);
    rep.check("kkt_ineq_violation", r.ineq_violation, KKT_TOL);
    rep.check("kkt_dual_negativity", r.dual_negativity, KKT_TOL);
    rep.check("kkt_comp_slackness", r.comp_slackness, KKT_TOL);

    let w = reconstruct_beta(&last.mu, &ds);
    let identity = (h.beta[0] - w[0]).abs().max((h.beta[1] - w[1]).abs());
    let beta_inf = h.beta[0].abs().max(h.beta[1].abs());
    rep.check("equilibrium_identity", identity, IDENTITY_TOL * (1.0 + beta_inf));

    let g = constraint_values(&ds, &h);
    let slack = g.iter().zip(&last.mu).map(|(g, m)| (g * m).abs()).fold(0.0, f64::max);
    rep.check("complementary_slackness", slack, COMP_SLACK_TOL);
    let worst_margin = g.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    rep.check("margin_shortfall", worst_margin.max(0.0), MARGIN_TOL);

    let primal = primal_objective(&h);
    match svm_dual_objective(&last.mu, &ds) {
        Some(d) => rep.check("duality_gap", saddleflow::problem::duality_gap(primal, d).abs(), GAP_TOL),
        None => {
            let s: f64 = last.mu.iter().zip(ds.labels()).map(|(m, l)| m * l.sign()).sum();
            rep.skip("duality_gap", &format!("dual undefined: |sum mu_i y_i| = {:e}", s.abs()));
        }
    }

    if traj.samples.len() >= 2 {
        let pass = passivity_check(&prog, &traj, &tc, cfg.quad_tol)?;
        rep.note(format!(
            "passivity: pairs = {}, max storage change = {:e}, max supply = {:e}",
            pass.pairs_checked, pass.max_storage_change, pass.max_supply
        ));
        rep.check("passivity_violation", pass.max_violation, pass.tolerance_used);
    } else {
        rep.skip("passivity_violation", "fewer than two samples");
    }

    let audit = storage_switch_audit(&prog, &traj, &tc)?;
    let flagged: Vec<_> = audit.iter().filter(|a| a.flagged).collect();
    rep.note(format!("storage audit: {} switches, {} flagged", audit.len(), flagged.len()));
    for a in flagged.iter().take(AUDIT_NOTE_LIMIT) {
        rep.note(format!(
            "flagged: mu_{} entered zero set at t = {}: S {} -> {}",
            a.event.index + 1,
            a.event.t,
            a.s_before,
            a.s_after
        ));
    }
    if flagged.len() > AUDIT_NOTE_LIMIT {
        rep.note(format!("... {} more flagged", flagged.len() - AUDIT_NOTE_LIMIT));
    }

    if use_oracle {
        match oracle::solve_exact(&ds)? {
            SvmOracleOutcome::Optimal(opt) => {
                let db = (h.beta[0] - opt.beta[0]).abs().max((h.beta[1] - opt.beta[1]).abs());
                rep.check("oracle_beta", db, ORACLE_TOL);
                rep.check("oracle_beta0", (h.beta0 - opt.beta0).abs(), ORACLE_TOL);
                let svs = support_vectors(&last.mu, DEFAULT_SV_REL_EPS);
                let same = svs == opt.active_set;
                rep.note(format!(
                    "support vectors: trace [{}], oracle [{}]",
                    join_indices(&svs),
                    join_indices(&opt.active_set)
                ));
                rep.check("oracle_support_set_mismatch", if same { 0.0 } else { 1.0 }, 0.0);
            }
            SvmOracleOutcome::Infeasible => rep.check("oracle_feasible", 1.0, 0.0),
        }
    }

    let verdict = if rep.failures == 0 { "PASS" } else { "FAIL" };
    rep.note(format!("result: {verdict} ({} failed)", rep.failures));
    emit!("{}", rep.text);
    if let Some(path) = report_path {
        fs::write(path, &rep.text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(if rep.failures == 0 { exit::OK } else { exit::CHECK_FAILED })
}

pub fn plot(cfg: &RunConfig) -> Result<i32, CliError> {
    let data = require_data(cfg)?;
    let trace_path = cfg
        .trace
        .clone()
        .ok_or_else(|| CliError::Usage("no trace given (--trace or `trace` in the config)".into()))?;
    let ds = dataio::read_dataset(data)?;
    let trace = dataio::read_trace(&trace_path)?;
    let ev_path = dataio::events_path(&trace_path);
    let events = if ev_path.exists() { dataio::read_events(&ev_path)? } else { Vec::new() };
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out_dir.display())))?;
    for p in plot::write_all(&cfg.out_dir, &ds, &trace, &events)? {
        say!("plot = {}", p.display());
    }
    Ok(exit::OK)
}
