//! Numerical kernels shared by the gait modules: event-located ODE
//! integration, bracketed root finding, 2×2 eigenvalues and constrained
//! derivative-free minimization.
//!
//! Everything here is a pure function of its inputs.

mod eigen;
mod ode;
mod optimize;
mod root;

pub use eigen::{eig_2x2, Matrix2};
pub use ode::{
    integrate_to_event, Crossing, DenseStep, Event, EventHit, IntegrationError, IntegrationSettings,
};
pub use optimize::{
    find_feasible, minimize_constrained, Evaluation, Minimum, OptimizeError, OptimizerSettings,
};
pub use root::{solve_scalar_root, RootError};
