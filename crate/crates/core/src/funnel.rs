//! Sequential composition of limit cycles: at every apex, hand control to
//! the cycle whose region of attraction contains the state and whose fixed
//! point is closest to the goal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dclf::{synthesize_best_decay, synthesize_control, SynthesisConfig, SynthesisError};
use crate::limit_cycle::{CycleError, LimitCycle};
use crate::model::{ApexState, Control, ModelParams, StepOutcome};
use crate::numerics::{IntegrationSettings, OptimizerSettings};
use crate::roa::{estimate_roa, in_roa, RoaError, RoaSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedOrder {
    Increasing,
    Decreasing,
}

/// What the planner does when no control meets the decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    /// Stop and return the partial plan in the error.
    Abort,
    /// Apply the admissible control with the smallest next Lyapunov value
    /// and keep going. The step is marked as not meeting the decay rate.
    BestDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSettings {
    /// Convergence radius in `(ẋ, y)`, Euclidean.
    pub delta: f64,
    pub max_steps: usize,
    pub on_infeasible: InfeasiblePolicy,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            delta: 0.05,
            max_steps: 50,
            on_infeasible: InfeasiblePolicy::Abort,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FunnelError {
    #[error("cycle library is empty")]
    EmptyLibrary,
    #[error("cycle at {0:?} has no region-of-attraction estimate")]
    MissingRoa(ApexState),
    #[error("fixed point {from:?} is outside the region of attraction of {to:?}; add an intermediate cycle")]
    OverlapGap { from: ApexState, to: ApexState },
    #[error("state {state:?} at step {step} is outside every region of attraction")]
    NoContainingCycle {
        step: usize,
        state: ApexState,
        partial: Box<TransitionPlan>,
    },
    #[error("synthesis failed at step {step}: {source}")]
    Synthesis {
        step: usize,
        source: SynthesisError,
        partial: Box<TransitionPlan>,
    },
    #[error("invalid planner settings")]
    InvalidSettings,
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Roa(#[from] RoaError),
}

impl FunnelError {
    /// The steps executed before the failure, when there were any to keep.
    pub fn partial_plan(&self) -> Option<&TransitionPlan> {
        match self {
            FunnelError::NoContainingCycle { partial, .. }
            | FunnelError::Synthesis { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Limit cycles with ROA estimates, sorted by fixed-point speed so that each
/// fixed point lies in the ROA of the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleLibrary {
    cycles: Vec<LimitCycle>,
    direction: SpeedOrder,
}

impl CycleLibrary {
    /// Sorts already-characterized cycles and checks that consecutive ROAs
    /// overlap.
    pub fn from_cycles(
        mut cycles: Vec<LimitCycle>,
        direction: SpeedOrder,
    ) -> Result<Self, FunnelError> {
        if cycles.is_empty() {
            return Err(FunnelError::EmptyLibrary);
        }
        if let Some(lc) = cycles.iter().find(|lc| lc.roa_level.is_none()) {
            return Err(FunnelError::MissingRoa(lc.apex()));
        }
        cycles.sort_by(|a, b| a.apex().xdot.total_cmp(&b.apex().xdot));
        if direction == SpeedOrder::Decreasing {
            cycles.reverse();
        }
        for pair in cycles.windows(2) {
            if !in_roa(&pair[0].apex(), &pair[1]) {
                return Err(FunnelError::OverlapGap {
                    from: pair[0].apex(),
                    to: pair[1].apex(),
                });
            }
        }
        Ok(Self { cycles, direction })
    }

    /// Finds, characterizes, and estimates the ROA of a cycle through each
    /// fixed point, in parallel.
    pub fn build(
        fixed_points: &[ApexState],
        direction: SpeedOrder,
        cfg: &SynthesisConfig,
        params: &ModelParams,
        settings: &IntegrationSettings,
        opt: &OptimizerSettings,
        roa: &RoaSettings,
    ) -> Result<Self, FunnelError> {
        let cycles = fixed_points
            .par_iter()
            .map(|target| -> Result<LimitCycle, FunnelError> {
                let mut lc = LimitCycle::find(target, params, settings)?;
                let estimate = estimate_roa(&lc, cfg, params, settings, opt, roa)?;
                lc.roa_level = Some(estimate.c_max);
                Ok(lc)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_cycles(cycles, direction)
    }

    pub fn cycles(&self) -> &[LimitCycle] {
        &self.cycles
    }

    pub fn direction(&self) -> SpeedOrder {
        self.direction
    }

    /// Index of the containing cycle whose fixed point is nearest `goal`;
    /// ties go to the later cycle.
    pub fn select(&self, x: &ApexState, goal: &ApexState) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, lc) in self.cycles.iter().enumerate() {
            if !in_roa(x, lc) {
                continue;
            }
            let d = lc.apex().distance(goal);
            if best.is_none_or(|(_, bd)| d <= bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    /// Position of the controlling cycle in the library.
    pub cycle_index: usize,
    pub state: ApexState,
    pub control: Control,
    pub outcome: StepOutcome,
    pub lyapunov: f64,
    pub lyapunov_next: f64,
    /// False when the step came from the best-decay fallback.
    pub decay_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPlan {
    pub steps: Vec<StepRecord>,
    pub converged: bool,
    /// Apex after the last executed step, or the initial state.
    pub final_state: ApexState,
}

/// Greedy funnel walk from `x_init` toward `x_goal`.
///
/// A step is taken from `x_k` unless the apex the previous control was
/// applied at already lay within `delta` of the goal (the initial state
/// stands in before the first step). The walk therefore always finishes with
/// one step from inside the goal ball, and a start inside that ball takes no
/// steps.
#[allow(clippy::too_many_arguments)]
pub fn plan_transition(
    x_init: &ApexState,
    x_goal: &ApexState,
    library: &CycleLibrary,
    planner: &PlannerSettings,
    cfg: &SynthesisConfig,
    params: &ModelParams,
    settings: &IntegrationSettings,
    opt: &OptimizerSettings,
) -> Result<TransitionPlan, FunnelError> {
    if !(planner.delta > 0.0) || planner.max_steps == 0 {
        return Err(FunnelError::InvalidSettings);
    }
    x_init.validate().map_err(CycleError::from)?;
    let mut plan = TransitionPlan {
        steps: Vec::new(),
        converged: false,
        final_state: *x_init,
    };
    let mut x = *x_init;
    let mut last_applied_at = *x_init;
    for k in 0..planner.max_steps {
        if last_applied_at.distance(x_goal) < planner.delta {
            plan.converged = true;
            return Ok(plan);
        }
        let Some(i) = library.select(&x, x_goal) else {
            return Err(FunnelError::NoContainingCycle {
                step: k,
                state: x,
                partial: Box::new(plan),
            });
        };
        let lc = &library.cycles[i];
        let attempt = match synthesize_control(&x, lc, cfg, params, settings, opt) {
            Err(SynthesisError::Infeasible { .. })
                if planner.on_infeasible == InfeasiblePolicy::BestDecay =>
            {
                synthesize_best_decay(&x, lc, cfg, params, settings, opt).map(|s| (s, false))
            }
            other => other.map(|s| (s, true)),
        };
        let (syn, decay_met) = match attempt {
            Ok(found) => found,
            Err(source) => {
                return Err(FunnelError::Synthesis {
                    step: k,
                    source,
                    partial: Box::new(plan),
                })
            }
        };
        plan.steps.push(StepRecord {
            k,
            cycle_index: i,
            state: x,
            control: syn.control,
            outcome: syn.outcome,
            lyapunov: syn.lyapunov,
            lyapunov_next: syn.lyapunov_next,
            decay_met,
        });
        last_applied_at = x;
        x = syn.outcome.next_apex;
        plan.final_state = x;
    }
    plan.converged = last_applied_at.distance(x_goal) < planner.delta;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(xdot: f64, y: f64, c: f64) -> LimitCycle {
        let mut lc = LimitCycle::find(
            &ApexState::new(xdot, y),
            &ModelParams::default(),
            &IntegrationSettings::default(),
        )
        .unwrap();
        lc.roa_level = Some(c);
        lc
    }

    #[test]
    fn sorting_and_overlap() {
        let a = cycle(2.0, 1.2, 1.0);
        let b = cycle(2.7, 1.4, 1.0);
        let lib =
            CycleLibrary::from_cycles(vec![b.clone(), a.clone()], SpeedOrder::Increasing).unwrap();
        assert_eq!(lib.cycles()[0].apex(), a.apex());
        // Going down, 2.7 must sit in the slower cycle's set: V = 1.49.
        assert!(matches!(
            CycleLibrary::from_cycles(vec![a.clone(), b.clone()], SpeedOrder::Decreasing),
            Err(FunnelError::OverlapGap { .. })
        ));
        let wide = cycle(2.0, 1.2, 1.5);
        let lib = CycleLibrary::from_cycles(vec![wide, b.clone()], SpeedOrder::Decreasing).unwrap();
        assert_eq!(lib.cycles()[0].apex(), b.apex());

        let tight = cycle(2.7, 1.4, 0.5);
        assert!(matches!(
            CycleLibrary::from_cycles(vec![a, tight], SpeedOrder::Increasing),
            Err(FunnelError::OverlapGap { .. })
        ));
    }

    #[test]
    fn library_needs_estimates() {
        let mut a = cycle(2.0, 1.2, 1.0);
        a.roa_level = None;
        assert!(matches!(
            CycleLibrary::from_cycles(vec![a], SpeedOrder::Increasing),
            Err(FunnelError::MissingRoa(_))
        ));
        assert_eq!(
            CycleLibrary::from_cycles(vec![], SpeedOrder::Increasing),
            Err(FunnelError::EmptyLibrary)
        );
    }

    #[test]
    fn selection_prefers_goal_side() {
        let lib = CycleLibrary::from_cycles(
            vec![cycle(2.0, 1.2, 1.0), cycle(2.7, 1.4, 1.0)],
            SpeedOrder::Increasing,
        )
        .unwrap();
        let goal = ApexState::new(5.0, 2.0);
        assert_eq!(lib.select(&ApexState::new(2.0, 1.2), &goal), Some(1));
        assert_eq!(lib.select(&ApexState::new(1.1, 1.2), &goal), Some(0));
        assert_eq!(lib.select(&ApexState::new(9.0, 1.2), &goal), None);
    }

    #[test]
    fn start_at_goal_takes_no_steps() {
        let lib =
            CycleLibrary::from_cycles(vec![cycle(2.0, 1.2, 1.0)], SpeedOrder::Increasing).unwrap();
        let x = ApexState::new(2.0, 1.2);
        let plan = plan_transition(
            &x,
            &x,
            &lib,
            &PlannerSettings::default(),
            &SynthesisConfig::default(),
            &ModelParams::default(),
            &IntegrationSettings::default(),
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!(plan.converged);
        assert!(plan.steps.is_empty());
        assert_eq!(plan.final_state, x);
    }

    #[test]
    fn escape_reports_partial_plan() {
        let lib =
            CycleLibrary::from_cycles(vec![cycle(2.0, 1.2, 0.1)], SpeedOrder::Increasing).unwrap();
        let err = plan_transition(
            &ApexState::new(5.0, 2.0),
            &ApexState::new(2.0, 1.2),
            &lib,
            &PlannerSettings::default(),
            &SynthesisConfig::default(),
            &ModelParams::default(),
            &IntegrationSettings::default(),
            &OptimizerSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            FunnelError::NoContainingCycle { step: 0, .. }
        ));
        assert_eq!(err.partial_plan().unwrap().steps.len(), 0);
    }
}
