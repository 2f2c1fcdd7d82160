//! Constrained convex optimization by integrating primal-dual saddle-point
//! dynamics, with switched handling of the inequality multipliers.
//!
//! * [`problem`]: convex programs, Lagrangian, KKT residual.
//! * [`dynamics`]: the vector field, Euler stepping with multiplier clamping, integration.
//! * [`diagnostics`]: storage functions, passivity inequality, Lyapunov distance.
//! * [`svm`]: the hard-margin linear SVM program and its closed-form laws.
//! * [`oracle`]: exact active-set enumeration for small instances.
//! * [`dataio`]: Gaussian class generation and CSV formats.

pub mod dataio;
pub mod diagnostics;
pub mod dynamics;
pub mod oracle;
pub mod problem;
pub mod svm;

pub use dynamics::{
    euler_step, integrate, vector_field, DynState, IntegrationConfig, PortSignals, SwitchEvent, SwitchKind,
    TimeConstants, Termination, Trajectory,
};
pub use problem::{ConvexProgram, KktResidual, ScalarField};
pub use svm::{build_svm_program, Hyperplane, Label, SvmDataset};
