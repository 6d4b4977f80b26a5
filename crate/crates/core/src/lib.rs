//! Limit-cycle synthesis, region-of-attraction estimation, and funnel-based
//! transitions for an actuated spring-mass runner.
//!
//! The usual flow:
//!
//! 1. [`limit_cycle::LimitCycle::find`] locates a passive gait through a
//!    target apex and measures its stability.
//! 2. [`roa::estimate_roa`] certifies how far from that gait a decaying
//!    control still exists.
//! 3. [`funnel::CycleLibrary::build`] chains overlapping cycles and
//!    [`funnel::plan_transition`] walks a state across them.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dclf;
pub mod funnel;
pub mod limit_cycle;
pub mod model;
pub mod numerics;
pub mod roa;

use thiserror::Error;

use crate::dclf::SynthesisError;
use crate::funnel::FunnelError;
use crate::limit_cycle::CycleError;
use crate::model::ModelError;
use crate::numerics::{IntegrationError, OptimizeError};
use crate::roa::RoaError;

/// Any failure from the crate, for callers that only need to report it.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Roa(#[from] RoaError),
    #[error(transparent)]
    Funnel(#[from] FunnelError),
}

/// Whether a failure came from the caller's inputs or from the numerics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid parameters, settings, or states.
    Input,
    /// No root, no feasible control, or an integration breakdown.
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        let input = match self {
            Error::Model(e) => model_input(e),
            Error::Cycle(e) => cycle_input(e),
            Error::Synthesis(e) => synthesis_input(e),
            Error::Roa(e) => roa_input(e),
            Error::Funnel(e) => match e {
                FunnelError::EmptyLibrary | FunnelError::InvalidSettings => true,
                FunnelError::Cycle(e) => cycle_input(e),
                FunnelError::Roa(e) => roa_input(e),
                FunnelError::Synthesis { source, .. } => synthesis_input(source),
                FunnelError::MissingRoa(_)
                | FunnelError::OverlapGap { .. }
                | FunnelError::NoContainingCycle { .. } => false,
            },
        };
        if input {
            ErrorKind::Input
        } else {
            ErrorKind::Numerical
        }
    }
}

fn model_input(e: &ModelError) -> bool {
    match e {
        ModelError::LegBelowGroundAtApex { .. }
        | ModelError::InvalidApex(_)
        | ModelError::InvalidControl(_)
        | ModelError::InvalidParams => true,
        ModelError::Integration(e) => !matches!(
            e,
            IntegrationError::MaxStepsExceeded { .. } | IntegrationError::NonFiniteState { .. }
        ),
        _ => false,
    }
}

fn cycle_input(e: &CycleError) -> bool {
    match e {
        CycleError::DegenerateHeight { .. } => true,
        CycleError::Simulation(e) => model_input(e),
        CycleError::NoRoot { .. } | CycleError::ResidualTooLarge { .. } => false,
    }
}

fn synthesis_input(e: &SynthesisError) -> bool {
    match e {
        SynthesisError::InvalidConfig => true,
        SynthesisError::Simulation(e) => model_input(e),
        SynthesisError::Optimizer(e) => !matches!(e, OptimizeError::Infeasible { .. }),
        SynthesisError::Infeasible { .. } => false,
    }
}

fn roa_input(e: &RoaError) -> bool {
    match e {
        RoaError::InvalidSettings => true,
        RoaError::Synthesis(e) => synthesis_input(e),
        RoaError::FixedPointInfeasible { .. } => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ApexState;

    #[test]
    fn classification() {
        let e: Error = ModelError::LegBelowGroundAtApex {
            y: 0.9,
            touchdown_height: 0.99,
        }
        .into();
        assert_eq!(e.kind(), ErrorKind::Input);
        let e: Error = CycleError::Simulation(ModelError::InvalidParams).into();
        assert_eq!(e.kind(), ErrorKind::Input);
        let e: Error = SynthesisError::Infeasible {
            state: ApexState::new(1.0, 1.2),
            best_residual: 0.3,
        }
        .into();
        assert_eq!(e.kind(), ErrorKind::Numerical);
        let e: Error = FunnelError::OverlapGap {
            from: ApexState::new(2.0, 1.2),
            to: ApexState::new(5.0, 2.0),
        }
        .into();
        assert_eq!(e.kind(), ErrorKind::Numerical);
        let e: Error =
            ModelError::Integration(IntegrationError::MaxStepsExceeded { steps: 9 }).into();
        assert_eq!(e.kind(), ErrorKind::Numerical);
    }
}
