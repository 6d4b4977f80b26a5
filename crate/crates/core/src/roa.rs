//! Region-of-attraction estimates: the largest Lyapunov level set whose
//! sampled boundary admits a decaying control everywhere.
//!
//! The certificate is numerical. Only boundary samples are checked and the
//! interior is assumed to follow.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dclf::{is_feasible, lyapunov_value, SynthesisConfig, SynthesisError};
use crate::limit_cycle::LimitCycle;
use crate::model::{ApexState, ModelParams};
use crate::numerics::{IntegrationSettings, OptimizerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoaSettings {
    /// Boundary samples per level.
    pub n_samples: usize,
    /// Level increment; levels run `c_step, 2 c_step, ..., 1`.
    pub c_step: f64,
}

impl Default for RoaSettings {
    fn default() -> Self {
        Self {
            n_samples: 16,
            c_step: 0.05,
        }
    }
}

impl RoaSettings {
    pub fn validate(&self) -> Result<(), RoaError> {
        if self.n_samples >= 4 && self.c_step > 0.0 && self.c_step <= 1.0 {
            Ok(())
        } else {
            Err(RoaError::InvalidSettings)
        }
    }

    /// The levels swept, ending exactly at 1.
    pub fn levels(&self) -> Vec<f64> {
        let count = (1.0 / self.c_step - 1e-9).ceil() as usize;
        (1..=count)
            .map(|i| (i as f64 * self.c_step).min(1.0))
            .collect()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RoaError {
    #[error("even the smallest level {c} has an infeasible boundary point {witness:?}")]
    FixedPointInfeasible { c: f64, witness: ApexState },
    #[error("invalid ROA settings: need at least 4 samples and 0 < c_step <= 1")]
    InvalidSettings,
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaEstimate {
    /// Largest level whose boundary samples were all feasible.
    pub c_max: f64,
    pub n_samples: usize,
    /// Levels actually tested, in order.
    pub c_grid: Vec<f64>,
    /// First infeasible sample at the level after `c_max`, if the sweep
    /// stopped short of 1.
    pub infeasible_witness: Option<ApexState>,
}

/// `n` points of `V = c`, evenly spaced in ellipse angle starting on the
/// positive speed axis.
pub fn level_set_points(cycle: &LimitCycle, c: f64, n: usize) -> Vec<ApexState> {
    let center = cycle.apex();
    let rx = (c / cycle.shape.speed).sqrt();
    let ry = (c / cycle.shape.height).sqrt();
    (0..n)
        .map(|i| {
            let phi = TAU * i as f64 / n as f64;
            ApexState::new(center.xdot + rx * phi.cos(), center.y + ry * phi.sin())
        })
        .collect()
}

/// Sweeps levels upward and stops at the first one with an infeasible
/// boundary sample.
///
/// Samples within a level are checked in parallel; the witness is the
/// lowest-index infeasible sample, so the result does not depend on
/// scheduling.
pub fn estimate_roa(
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
    params: &ModelParams,
    settings: &IntegrationSettings,
    opt: &OptimizerSettings,
    roa: &RoaSettings,
) -> Result<RoaEstimate, RoaError> {
    roa.validate()?;
    let mut c_grid = Vec::new();
    let mut c_max = None;
    for c in roa.levels() {
        c_grid.push(c);
        let points = level_set_points(cycle, c, roa.n_samples);
        let feasible = points
            .par_iter()
            .map(|x| is_feasible(x, cycle, cfg, params, settings, opt))
            .collect::<Result<Vec<bool>, SynthesisError>>()?;
        if let Some(i) = feasible.iter().position(|ok| !ok) {
            let witness = points[i];
            let Some(c_max) = c_max else {
                return Err(RoaError::FixedPointInfeasible { c, witness });
            };
            return Ok(RoaEstimate {
                c_max,
                n_samples: roa.n_samples,
                c_grid,
                infeasible_witness: Some(witness),
            });
        }
        c_max = Some(c);
    }
    Ok(RoaEstimate {
        c_max: c_max.unwrap_or(1.0),
        n_samples: roa.n_samples,
        c_grid,
        infeasible_witness: None,
    })
}

/// Closed level-set membership against the cycle's recorded `c_max`; false
/// when no estimate is attached.
pub fn in_roa(x: &ApexState, cycle: &LimitCycle) -> bool {
    cycle
        .roa_level
        .is_some_and(|c| lyapunov_value(x, cycle) <= c)
}
