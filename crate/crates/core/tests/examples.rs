//! Worked examples for each operation, mostly on the two-point SVM
//! `{((0,1),+1), ((0,-1),-1)}` whose optimum is known by symmetry.

use std::sync::Arc;

use saddleflow::dataio::{self, TraceChannels};
use saddleflow::diagnostics::{
    lyapunov_series, passivity_check, storage_series, storage_switch_audit, storage_value,
};
use saddleflow::dynamics::{
    projected_rate, switching_set, DynamicsError, StepSizes, SwitchKind, SwitchState,
};
use saddleflow::oracle::{self, SvmOracleOutcome};
use saddleflow::problem::{duality_gap, Affine, FieldRef, Quadratic};
use saddleflow::svm::{
    classify, margin, reconstruct_beta, support_vectors, svm_dual_objective, DEFAULT_SV_REL_EPS,
};
use saddleflow::{
    build_svm_program, euler_step, integrate, vector_field, ConvexProgram, DynState, Hyperplane, IntegrationConfig,
    Label, PortSignals, SvmDataset, Termination, TimeConstants,
};
use saddleflow_testkit::{shifted_square, two_point};

fn optimum() -> DynState {
    DynState::new(vec![0.0, 1.0, 0.0], vec![], vec![0.5, 0.5])
}

fn square() -> ConvexProgram {
    ConvexProgram::unconstrained(Arc::new(Quadratic::new(vec![2.0], vec![0.0], 0.0).unwrap())).unwrap()
}

fn run(prog: &ConvexProgram, s0: &DynState, cfg: &IntegrationConfig) -> saddleflow::Trajectory {
    integrate(prog, s0, &TimeConstants::ones(prog), &PortSignals::zero(prog.dim()), cfg).unwrap()
}

#[test]
fn lagrangian_values() {
    assert_eq!(square().lagrangian(&[2.0], &[], &[]).unwrap(), 4.0);
    let prog = build_svm_program(&two_point()).unwrap();
    assert_eq!(prog.lagrangian(&[0.0, 1.0, 0.0], &[], &[0.5, 0.5]).unwrap(), 0.5);
    let f: FieldRef = Arc::new(Quadratic::new(vec![2.0], vec![0.0], 0.0).unwrap());
    let g: FieldRef = Arc::new(Affine::new(vec![-1.0], 1.0));
    let prog = ConvexProgram::new(f, vec![], vec![g]).unwrap();
    assert_eq!(prog.lagrangian(&[0.0], &[], &[3.0]).unwrap(), 3.0);
}

#[test]
fn lagrangian_gradient_values() {
    let prog = build_svm_program(&two_point()).unwrap();
    let g = prog.lagrangian_gradients(&[0.0; 3], &[], &[0.0, 0.0]).unwrap();
    assert_eq!(g.x, vec![0.0; 3]);
    assert_eq!(g.mu, vec![1.0, 1.0]);
    let g = prog.lagrangian_gradients(&[0.0, 1.0, 0.0], &[], &[0.5, 0.5]).unwrap();
    assert!(g.x.iter().chain(&g.mu).all(|v| *v == 0.0));
    let g = square().lagrangian_gradients(&[3.0], &[], &[]).unwrap();
    assert_eq!(g.x, vec![6.0]);
    assert!(g.lam.is_empty() && g.mu.is_empty());
}

#[test]
fn kkt_residual_values() {
    let prog = build_svm_program(&two_point()).unwrap();
    let r = prog.kkt_residual(&[0.0, 1.0, 0.0], &[], &[0.5, 0.5]).unwrap();
    assert!(r.max() <= 1e-12);
    let r = prog.kkt_residual(&[0.0; 3], &[], &[0.0, 0.0]).unwrap();
    assert_eq!(r.ineq_violation, 1.0);
    assert_eq!(r.stationarity, 0.0);
    let r = prog.kkt_residual(&[0.0, 1.0, 0.0], &[], &[0.5, -0.1]).unwrap();
    assert_eq!(r.dual_negativity, 0.1);
}

#[test]
fn duality_gap_values() {
    assert_eq!(duality_gap(0.5, 0.5), 0.0);
    assert_eq!(duality_gap(1.0, 0.25), -0.75);
    let dual = svm_dual_objective(&[0.5, 0.5], &two_point()).unwrap();
    assert_eq!(duality_gap(0.5, dual), 0.0);
}

#[test]
fn projection_and_switching() {
    assert_eq!(projected_rate(-2.0, 0.5).unwrap(), -2.0);
    assert_eq!(projected_rate(-2.0, 0.0).unwrap(), 0.0);
    assert_eq!(projected_rate(3.0, 0.0).unwrap(), 3.0);
    let set = |v: &[usize]| v.iter().copied().collect::<SwitchState>();
    assert_eq!(switching_set(&[0.0, 0.3], &[-1.0, -2.0]), set(&[0]));
    assert_eq!(switching_set(&[0.0, 0.0], &[1.0, -1.0]), set(&[1]));
    assert_eq!(switching_set(&[0.1, 0.2], &[-5.0, -5.0]), set(&[]));
}

#[test]
fn vector_field_values() {
    let prog = build_svm_program(&two_point()).unwrap();
    let ports = PortSignals::zero(3);
    let tc = TimeConstants::ones(&prog);
    let d = vector_field(&prog, &DynState::zeros(&prog), &tc, &ports).unwrap();
    assert_eq!(d.x, vec![0.0; 3]);
    assert_eq!(d.mu, vec![1.0, 1.0]);
    assert!(vector_field(&prog, &optimum(), &tc, &ports).unwrap().is_zero());
    let slow = TimeConstants::uniform(&prog, 2.0, 2.0, 2.0).unwrap();
    assert!(vector_field(&prog, &optimum(), &slow, &ports).unwrap().is_zero());
}

#[test]
fn euler_step_values() {
    let prog = build_svm_program(&two_point()).unwrap();
    let tc = TimeConstants::ones(&prog);
    let ports = PortSignals::zero(3);
    let (next, events) = euler_step(&prog, &DynState::zeros(&prog), &tc, 0.1, &ports).unwrap();
    assert_eq!(next.x, vec![0.0; 3]);
    assert_eq!(next.mu, vec![0.1, 0.1]);
    assert_eq!(events.len(), 2);
    assert!(events.iter().all(|e| e.kind == SwitchKind::LeftZeroSet && e.t == next.t));

    for dt in [1e-3, 0.1, 10.0] {
        let (next, events) = euler_step(&prog, &optimum(), &tc, dt, &ports).unwrap();
        assert_eq!((next.x, next.mu), (optimum().x, optimum().mu));
        assert!(events.is_empty());
    }

    // x = 2 satisfies 1 - x <= 0 with g = -1, so mu' = -1
    let prog = shifted_square(2.0);
    let s = DynState::new(vec![2.0], vec![], vec![0.01]);
    let (next, events) = euler_step(&prog, &s, &TimeConstants::ones(&prog), 0.1, &PortSignals::zero(1)).unwrap();
    assert_eq!(next.mu, vec![0.0]);
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].kind, SwitchKind::EnteredZeroSet);
    assert_eq!(events[0].index, 0);
}

#[test]
fn euler_step_rejects_bad_input() {
    let prog = build_svm_program(&two_point()).unwrap();
    let tc = TimeConstants::ones(&prog);
    let ports = PortSignals::zero(3);
    let bad = DynState::new(vec![0.0; 3], vec![], vec![-0.1, 0.0]);
    assert!(matches!(
        euler_step(&prog, &bad, &tc, 0.1, &ports),
        Err(DynamicsError::OutsideOrthant { .. })
    ));
    assert!(euler_step(&prog, &optimum(), &tc, 0.0, &ports).is_err());
    assert!(StepSizes::from_time_constants(&tc, 0.5).eta_mu.iter().all(|e| *e == 0.5));
}

#[test]
fn integrate_two_point() {
    let prog = build_svm_program(&two_point()).unwrap();
    let cfg = IntegrationConfig { dt: 0.01, max_time: 50.0, kkt_tol: Some(1e-4), ..IntegrationConfig::default() };
    let traj = run(&prog, &DynState::zeros(&prog), &cfg);
    assert!(traj.termination.is_converged());
    let last = traj.final_state();
    assert!((last.x[0]).abs() <= 1e-3 && (last.x[1] - 1.0).abs() <= 1e-3);
    assert!(last.mu.iter().all(|m| (m - 0.5).abs() <= 1e-3));

    let traj = run(&prog, &optimum(), &cfg);
    assert!(matches!(traj.termination, Termination::Converged { .. }));
    assert_eq!(traj.steps, 0);
    assert_eq!(traj.final_state().t, 0.0);

    let cfg = IntegrationConfig { max_time: 0.0, ..cfg };
    let traj = run(&prog, &DynState::zeros(&prog), &cfg);
    assert_eq!(traj.termination, Termination::MaxTime);
    assert_eq!(traj.samples.len(), 1);
}

#[test]
fn integrate_reports_divergence() {
    let prog = build_svm_program(&two_point()).unwrap();
    let cfg = IntegrationConfig { dt: 5.0, max_time: 1e4, blowup_bound: 1e6, ..IntegrationConfig::default() };
    let err = integrate(
        &prog,
        &DynState::zeros(&prog),
        &TimeConstants::ones(&prog),
        &PortSignals::zero(3),
        &cfg,
    )
    .unwrap_err();
    assert!(matches!(err, DynamicsError::Divergence { .. }), "{err}");
}

#[test]
fn storage_values() {
    let none = SwitchState::default();
    assert_eq!(storage_value(&[0.0, 0.0], &none, &[1.0, 1.0]), 0.0);
    let second: SwitchState = [1].into_iter().collect();
    assert_eq!(storage_value(&[1.0, 2.0], &second, &[1.0, 1.0]), 0.5);

    let prog = build_svm_program(&two_point()).unwrap();
    let cfg = IntegrationConfig { max_time: 0.0, ..IntegrationConfig::default() };
    let traj = run(&prog, &DynState::zeros(&prog), &cfg);
    let series = storage_series(&prog, &traj, &TimeConstants::ones(&prog)).unwrap();
    assert_eq!(series[0].value, 1.0);
}

#[test]
fn passivity_examples() {
    let prog = build_svm_program(&two_point()).unwrap();
    let tc = TimeConstants::ones(&prog);
    let still = IntegrationConfig { kkt_tol: None, max_time: 1.0, record_every: 1, ..IntegrationConfig::default() };
    let traj = run(&prog, &optimum(), &still);
    let rep = passivity_check(&prog, &traj, &tc, Some(1e-12)).unwrap();
    assert!(rep.pairs_checked >= 1 && rep.passed && rep.max_violation <= 1e-12);

    let cfg = IntegrationConfig { dt: 0.01, max_time: 50.0, kkt_tol: Some(1e-6), record_every: 1, ..IntegrationConfig::default() };
    let traj = run(&prog, &DynState::zeros(&prog), &cfg);
    let rep = passivity_check(&prog, &traj, &tc, Some(1e-3)).unwrap();
    assert!(rep.passed, "{rep:?}");

    let single = run(&prog, &DynState::zeros(&prog), &IntegrationConfig { max_time: 0.0, ..cfg });
    assert!(passivity_check(&prog, &single, &tc, None).is_err());
}

#[test]
fn lyapunov_examples() {
    let prog = build_svm_program(&two_point()).unwrap();
    let tc = TimeConstants::ones(&prog);
    // explicit Euler gains 0.5 dt^2 |F|^2 per step, inside the per-step budget at this dt
    let cfg = IntegrationConfig { dt: 1e-3, max_time: 100.0, kkt_tol: Some(1e-7), record_every: 1, ..IntegrationConfig::default() };
    let traj = run(&prog, &DynState::zeros(&prog), &cfg);
    let v = lyapunov_series(&traj, &optimum(), &tc).unwrap();
    assert!(v.last().unwrap().1 <= 1e-6);
    for w in v.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-6 * (1.0 + w[0].1), "V rose at t = {}", w[1].0);
    }

    let at = lyapunov_series(&run(&prog, &optimum(), &cfg), &optimum(), &tc).unwrap();
    assert!(at.iter().all(|(_, v)| *v == 0.0));
    let off = DynState::new(vec![3.0, 1.0, 0.0], vec![], vec![0.5, 0.5]);
    let single = run(&prog, &off, &IntegrationConfig { max_time: 0.0, ..cfg });
    assert_eq!(lyapunov_series(&single, &optimum(), &tc).unwrap()[0].1, 4.5);
}

#[test]
fn audit_examples() {
    let prog = build_svm_program(&two_point()).unwrap();
    let tc = TimeConstants::ones(&prog);
    let still = run(&prog, &optimum(), &IntegrationConfig { kkt_tol: None, max_time: 1.0, ..IntegrationConfig::default() });
    assert!(storage_switch_audit(&prog, &still, &tc).unwrap().is_empty());

    let cfg = IntegrationConfig { dt: 0.01, max_time: 50.0, kkt_tol: Some(1e-6), ..IntegrationConfig::default() };
    let traj = run(&prog, &DynState::zeros(&prog), &cfg);
    for entry in storage_switch_audit(&prog, &traj, &tc).unwrap() {
        assert!(entry.s_after < entry.s_before, "{entry:?}");
    }

    let prog = shifted_square(3.0);
    let tc = TimeConstants::ones(&prog);
    let traj = run(&prog, &DynState::zeros(&prog), &IntegrationConfig { dt: 0.01, ..cfg });
    let audit = storage_switch_audit(&prog, &traj, &tc).unwrap();
    assert_eq!(audit.len(), 1, "{audit:?}");
    assert!(!audit[0].flagged && audit[0].s_after < audit[0].s_before);
}

#[test]
fn svm_program_and_laws() {
    let ds = two_point();
    let prog = build_svm_program(&ds).unwrap();
    assert_eq!((prog.dim(), prog.num_inequalities()), (3, 2));
    assert_eq!(prog.inequality_values(&[0.0; 3]), vec![1.0, 1.0]);
    assert_eq!(prog.objective().value(&[3.0, 4.0, 7.0]), 12.5);

    assert_eq!(svm_dual_objective(&[0.5, 0.5], &ds), Some(0.5));
    assert_eq!(svm_dual_objective(&[0.0, 0.0], &ds), Some(0.0));
    assert_eq!(svm_dual_objective(&[1.0, 0.0], &ds), None);

    assert_eq!(margin(&Hyperplane::new([0.0, 1.0], 0.0)).unwrap(), 2.0);
    assert!((margin(&Hyperplane::new([3.0, 4.0], 0.0)).unwrap() - 0.4).abs() < 1e-15);
    assert!(margin(&Hyperplane::new([0.0, 0.0], 1.0)).is_err());

    assert_eq!(support_vectors(&[0.5, 0.5], DEFAULT_SV_REL_EPS), vec![0, 1]);
    assert!(support_vectors(&[0.0, 0.0, 0.0], DEFAULT_SV_REL_EPS).is_empty());
    assert_eq!(reconstruct_beta(&[0.5, 0.5], &ds), [0.0, 1.0]);
    assert_eq!(reconstruct_beta(&[0.0, 0.0], &ds), [0.0, 0.0]);

    let h = Hyperplane::new([0.0, 1.0], 0.0);
    assert_eq!(classify(&h, &[0.0, 5.0]), 1);
    assert_eq!(classify(&h, &[3.0, 0.0]), 0);
    assert_eq!(classify(&Hyperplane::new([0.0, 1.0], -3.0), &[0.0, 6.0]), 1);
}

#[test]
fn oracle_examples() {
    let SvmOracleOutcome::Optimal(sol) = oracle::solve_exact(&two_point()).unwrap() else {
        panic!("two-point problem is feasible");
    };
    assert!((sol.beta[0]).abs() < 1e-12 && (sol.beta[1] - 1.0).abs() < 1e-12 && sol.beta0.abs() < 1e-12);
    assert!(sol.mu.iter().all(|m| (m - 0.5).abs() < 1e-12));
    assert!((sol.optimal_value - 0.5).abs() < 1e-12);
    assert_eq!(margin(&Hyperplane::new(sol.beta, sol.beta0)).unwrap(), 2.0);

    let swapped = SvmDataset::new(vec![[1.0, 0.0], [-1.0, 0.0]], vec![Label::Positive, Label::Negative]).unwrap();
    let SvmOracleOutcome::Optimal(sol) = oracle::solve_exact(&swapped).unwrap() else {
        panic!("swapped problem is feasible");
    };
    assert!((sol.beta[0] - 1.0).abs() < 1e-12 && sol.beta[1].abs() < 1e-12);

    let clash = SvmDataset::new(vec![[0.0, 0.0], [0.0, 0.0]], vec![Label::Positive, Label::Negative]).unwrap();
    assert_eq!(oracle::solve_exact(&clash).unwrap(), SvmOracleOutcome::Infeasible);
    assert!(oracle::is_separable(&two_point()));
    assert!(!oracle::is_separable(&clash));
}

#[test]
fn trace_examples() {
    let dir = tempfile::tempdir().unwrap();
    let prog = build_svm_program(&two_point()).unwrap();
    let tc = TimeConstants::ones(&prog);

    let single = run(&prog, &DynState::zeros(&prog), &IntegrationConfig { max_time: 0.0, ..IntegrationConfig::default() });
    let path = dir.path().join("single.csv");
    dataio::write_trace(&path, &single, &TraceChannels::default()).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);

    let cfg = IntegrationConfig { dt: 0.01, max_time: 50.0, kkt_tol: Some(1e-6), ..IntegrationConfig::default() };
    let traj = run(&prog, &DynState::zeros(&prog), &cfg);
    let path = dir.path().join("trace.csv");
    dataio::write_trace(&path, &traj, &TraceChannels::default()).unwrap();
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert!(header.ends_with(",mu_1,mu_2"), "{header}");
    let back = dataio::read_trace(&path).unwrap();
    assert!(back.mu.last().unwrap().iter().all(|m| (m - 0.5).abs() < 1e-3));

    let square = shifted_square(3.0);
    let traj = run(&square, &DynState::zeros(&square), &cfg);
    let path = dir.path().join("clamp.csv");
    let events = dataio::write_trace(&path, &traj, &TraceChannels::default()).unwrap();
    let text = std::fs::read_to_string(events).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|r| r.ends_with(",1,entered_zero_set")).count(), 1, "{text}");
    let _ = tc;
}
