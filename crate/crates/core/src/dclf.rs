//! Discrete control Lyapunov function on the apex section and the
//! minimum-cost controller that enforces exponential decay.
//!
//! For a target cycle with fixed point `x*` and shape `S`, the control at
//! apex `x_k` minimizes the step's mechanical cost of transport subject to
//!
//! ```text
//! V(F(x_k, u)) - (1 - α) V(x_k) <= 0,    V(x) = (x - x*)ᵀ S (x - x*)
//! ```
//!
//! and, optionally, an actuator bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::limit_cycle::{LimitCycle, THETA_BRACKET};
use crate::model::{simulate_step, ApexState, Control, ModelError, ModelParams, StepOutcome};
use crate::numerics::{
    find_feasible, minimize_constrained, Evaluation, IntegrationSettings, OptimizeError,
    OptimizerSettings,
};

/// What the actuator bound limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// `P_c <= bound` and `P_r <= bound`.
    ConstantForceOnly,
    /// `max over stance of P + k (l0 - l) <= bound`.
    TotalAxialForce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Fraction of the Lyapunov value removed per step, in (0, 1).
    pub alpha: f64,
    /// Largest allowed leg force, N.
    pub actuator_bound: Option<f64>,
    pub bound_mode: BoundMode,
    /// Largest accepted decay-condition residual, in Lyapunov units.
    pub constraint_tol: f64,
    /// Upper edge of the search box for `P_c` and `P_r`, N.
    pub max_thrust: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            actuator_bound: None,
            bound_mode: BoundMode::TotalAxialForce,
            constraint_tol: 1e-6,
            max_thrust: 6000.0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bound_ok = self.actuator_bound.is_none_or(|b| b > 0.0 && b.is_finite());
        if self.alpha > 0.0
            && self.alpha < 1.0
            && bound_ok
            && self.constraint_tol > 0.0
            && self.max_thrust > 0.0
        {
            Ok(())
        } else {
            Err(SynthesisError::InvalidConfig)
        }
    }

    /// Bounds `(θ, P_c, P_r)` for the optimizer.
    pub fn search_box(&self) -> [(f64, f64); 3] {
        let thrust_hi = match (self.bound_mode, self.actuator_bound) {
            (BoundMode::ConstantForceOnly, Some(b)) => self.max_thrust.min(b),
            _ => self.max_thrust,
        };
        [THETA_BRACKET, (0.0, thrust_hi), (0.0, thrust_hi)]
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SynthesisError {
    /// `best_residual` is the smallest worst-constraint value reached.
    #[error("no admissible control satisfies the constraints from {state:?} (best violation {best_residual:e})")]
    Infeasible {
        state: ApexState,
        best_residual: f64,
    },
    #[error("invalid synthesis configuration")]
    InvalidConfig,
    #[error(transparent)]
    Simulation(#[from] ModelError),
    #[error(transparent)]
    Optimizer(OptimizeError),
}

/// A synthesized control and the step it produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub control: Control,
    pub outcome: StepOutcome,
    pub lyapunov: f64,
    pub lyapunov_next: f64,
    pub residual: f64,
}

/// `V(x) = s1 (ẋ - ẋ*)² + s2 (y - y*)²`.
pub fn lyapunov_value(x: &ApexState, cycle: &LimitCycle) -> f64 {
    let center = cycle.apex();
    let dv = x.xdot - center.xdot;
    let dy = x.y - center.y;
    cycle.shape.speed * dv * dv + cycle.shape.height * dy * dy
}

/// `V(F(x_k, u)) - (1 - α) V(x_k)`; non-positive when the decay condition
/// holds.
pub fn dclf_residual(
    x_k: &ApexState,
    control: &Control,
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
    params: &ModelParams,
    settings: &IntegrationSettings,
) -> Result<f64, ModelError> {
    let out = simulate_step(x_k, control, params, settings)?;
    Ok(residual_from(x_k, &out, cycle, cfg))
}

fn residual_from(
    x_k: &ApexState,
    out: &StepOutcome,
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
) -> f64 {
    lyapunov_value(&out.next_apex, cycle) - (1.0 - cfg.alpha) * lyapunov_value(x_k, cycle)
}

/// Which half of stance carries the constant force. Controls that push in
/// both halves at once are excluded: under the smoothed cost they stiffen
/// the leg against itself and trade spring work for thrust work, which no
/// reported gait uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Face {
    Compression,
    Restitution,
}

impl Face {
    fn control(self, u: &[f64]) -> Control {
        match self {
            Face::Compression => Control::new(u[0], u[1], 0.0),
            Face::Restitution => Control::new(u[0], 0.0, u[1]),
        }
    }

    fn bounds(self, cfg: &SynthesisConfig) -> [(f64, f64); 2] {
        let [theta, pc, pr] = cfg.search_box();
        match self {
            Face::Compression => [theta, pc],
            Face::Restitution => [theta, pr],
        }
    }
}

/// What a search optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Goal {
    /// MCOT subject to the decay condition and the bound.
    Cost,
    /// Next-apex Lyapunov value subject to the bound only.
    Decay,
}

/// Objective and constraints for one decision vector.
#[allow(clippy::too_many_arguments)]
fn evaluate(
    x_k: &ApexState,
    face: Face,
    goal: Goal,
    u: &[f64],
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
    params: &ModelParams,
    settings: &IntegrationSettings,
) -> Option<Evaluation> {
    let out = simulate_step(x_k, &face.control(u), params, settings).ok()?;
    let mut constraints = Vec::with_capacity(2);
    let objective = match goal {
        Goal::Cost => {
            constraints.push(residual_from(x_k, &out, cycle, cfg));
            out.mcot
        }
        Goal::Decay => lyapunov_value(&out.next_apex, cycle),
    };
    if let (BoundMode::TotalAxialForce, Some(bound)) = (cfg.bound_mode, cfg.actuator_bound) {
        constraints.push((out.peak_axial_force - bound) / bound);
    }
    Some(Evaluation {
        objective,
        constraints,
    })
}

/// Deterministic starts on one face: the cycle's own control, then the
/// nominal angle and `θ* ± 0.05` with the thrust sized to close the energy
/// gap.
fn initial_guesses(
    x_k: &ApexState,
    face: Face,
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
    params: &ModelParams,
) -> Vec<Vec<f64>> {
    let [theta_box, thrust_box] = face.bounds(cfg);
    let nominal = cycle.control().theta;
    // Spring work over a passive cycle is k δ², so δ estimates how far the
    // constant force acts in each half of stance.
    let stroke = (cycle.nominal_spring_work() / params.stiffness.max(1e-9))
        .sqrt()
        .max(0.02);
    let gap = params.apex_energy(&cycle.apex()) - params.apex_energy(x_k);
    let thrust = (gap.abs() / stroke).clamp(thrust_box.0, thrust_box.1);
    let theta = |t: f64| t.clamp(theta_box.0, theta_box.1);
    vec![
        vec![theta(nominal), 0.0],
        vec![theta(nominal), thrust],
        vec![theta(nominal - 0.05), thrust],
        vec![theta(nominal + 0.05), thrust],
    ]
}

/// Faces to search, the one matching the sign of the energy gap first.
fn faces(x_k: &ApexState, cycle: &LimitCycle, params: &ModelParams) -> [Face; 2] {
    if params.apex_energy(x_k) > params.apex_energy(&cycle.apex()) {
        [Face::Compression, Face::Restitution]
    } else {
        [Face::Restitution, Face::Compression]
    }
}

fn optimizer_settings(cfg: &SynthesisConfig, opt: &OptimizerSettings) -> OptimizerSettings {
    OptimizerSettings {
        constraint_tol: cfg.constraint_tol,
        ..*opt
    }
}

fn check_inputs(
    x_k: &ApexState,
    cfg: &SynthesisConfig,
    params: &ModelParams,
) -> Result<(), SynthesisError> {
    cfg.validate()?;
    params.validate()?;
    x_k.validate()?;
    Ok(())
}

/// Whether some admissible control satisfies the decay condition from
/// `x_k`. Runs exactly the feasibility phase of [`synthesize_control`], so
/// the two always agree.
pub fn is_feasible(
    x_k: &ApexState,
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
    params: &ModelParams,
    settings: &IntegrationSettings,
    opt: &OptimizerSettings,
) -> Result<bool, SynthesisError> {
    check_inputs(x_k, cfg, params)?;
    let opt = optimizer_settings(cfg, opt);
    for face in faces(x_k, cycle, params) {
        match find_feasible(
            |u| evaluate(x_k, face, Goal::Cost, u, cycle, cfg, params, settings),
            &face.bounds(cfg),
            &initial_guesses(x_k, face, cycle, cfg, params),
            &opt,
        ) {
            Ok(_) => return Ok(true),
            Err(OptimizeError::Infeasible { .. }) => {}
            Err(other) => return Err(SynthesisError::Optimizer(other)),
        }
    }
    Ok(false)
}

/// Minimum-MCOT control that enforces exponential decay toward `cycle`.
///
/// Both single-thrust faces are searched and the cheaper feasible result
/// wins. Fails with [`SynthesisError::Infeasible`] when `x_k` lies outside
/// what the cycle's controller can capture under `cfg`.
pub fn synthesize_control(
    x_k: &ApexState,
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
    params: &ModelParams,
    settings: &IntegrationSettings,
    opt: &OptimizerSettings,
) -> Result<Synthesis, SynthesisError> {
    search(x_k, Goal::Cost, cycle, cfg, params, settings, opt)
}

/// The admissible control that brings the next apex closest to the cycle
/// in Lyapunov terms, ignoring cost and the decay rate.
///
/// A fallback for states where [`synthesize_control`] is infeasible
/// because of the actuator bound; the returned step may not decay.
pub fn synthesize_best_decay(
    x_k: &ApexState,
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
    params: &ModelParams,
    settings: &IntegrationSettings,
    opt: &OptimizerSettings,
) -> Result<Synthesis, SynthesisError> {
    search(x_k, Goal::Decay, cycle, cfg, params, settings, opt)
}

fn search(
    x_k: &ApexState,
    goal: Goal,
    cycle: &LimitCycle,
    cfg: &SynthesisConfig,
    params: &ModelParams,
    settings: &IntegrationSettings,
    opt: &OptimizerSettings,
) -> Result<Synthesis, SynthesisError> {
    check_inputs(x_k, cfg, params)?;
    let opt = optimizer_settings(cfg, opt);
    let mut best: Option<Control> = None;
    let mut best_value = f64::INFINITY;
    let mut best_violation = f64::INFINITY;
    for face in faces(x_k, cycle, params) {
        match minimize_constrained(
            |u| evaluate(x_k, face, goal, u, cycle, cfg, params, settings),
            &face.bounds(cfg),
            &initial_guesses(x_k, face, cycle, cfg, params),
            &opt,
        ) {
            Ok(min) if min.value < best_value => {
                best_value = min.value;
                best = Some(face.control(&min.point));
            }
            Ok(_) => {}
            Err(OptimizeError::Infeasible {
                best_violation: v, ..
            }) => {
                best_violation = best_violation.min(v);
            }
            Err(other) => return Err(SynthesisError::Optimizer(other)),
        }
    }
    let Some(control) = best else {
        return Err(SynthesisError::Infeasible {
            state: *x_k,
            best_residual: best_violation,
        });
    };

    let outcome = simulate_step(x_k, &control, params, settings)?;
    let lyapunov = lyapunov_value(x_k, cycle);
    let lyapunov_next = lyapunov_value(&outcome.next_apex, cycle);
    Ok(Synthesis {
        control,
        outcome,
        lyapunov,
        lyapunov_next,
        residual: lyapunov_next - (1.0 - cfg.alpha) * lyapunov,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_cycle::{FixedPoint, ShapeMatrix};

    /// A cycle record with a hand-set center and shape, for V arithmetic.
    fn stub_cycle(xdot: f64, y: f64, s2: f64) -> LimitCycle {
        let apex = ApexState::new(xdot, y);
        let out = StepOutcome {
            next_apex: apex,
            distance: 1.0,
            spring_work: 0.0,
            compression_work: 0.0,
            restitution_work: 0.0,
            mcot: 0.0,
            peak_axial_force: 0.0,
            stance_time: 0.0,
            touchdown: Default::default(),
            midstance: Default::default(),
            takeoff: Default::default(),
        };
        LimitCycle {
            fixed_point: FixedPoint {
                apex,
                control: Control::passive(0.2),
                nominal: out,
            },
            jacobian: [[1.0, 0.0], [0.0, 1.0]],
            eigenvalues: (1.0, 1.0),
            shape: ShapeMatrix {
                speed: 1.0,
                height: s2,
            },
            roa_level: None,
        }
    }

    #[test]
    fn lyapunov_hand_values() {
        let lc = stub_cycle(5.0, 1.3, 11.11);
        assert_eq!(lyapunov_value(&ApexState::new(5.0, 1.3), &lc), 0.0);
        let v = lyapunov_value(&ApexState::new(4.2, 1.48), &lc);
        assert!((v - 0.999964).abs() < 1e-9, "{v}");
        let lc = stub_cycle(5.0, 1.3, 1.0 / 0.09);
        let v = lyapunov_value(&ApexState::new(4.2, 1.48), &lc);
        assert!((v - 1.0).abs() < 1e-12, "{v}");

        let lc = stub_cycle(2.7, 1.4, 6.25);
        let v = lyapunov_value(&ApexState::new(2.0, 1.2), &lc);
        assert!((v - 0.74).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = SynthesisConfig {
            alpha: 1.0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(SynthesisError::InvalidConfig));
        let bad = SynthesisConfig {
            actuator_bound: Some(-1.0),
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(SynthesisError::InvalidConfig));
    }

    #[test]
    fn constant_force_bound_shrinks_box() {
        let cfg = SynthesisConfig {
            actuator_bound: Some(1000.0),
            bound_mode: BoundMode::ConstantForceOnly,
            ..Default::default()
        };
        assert_eq!(cfg.search_box()[1], (0.0, 1000.0));
        let cfg = SynthesisConfig {
            actuator_bound: Some(1000.0),
            ..Default::default()
        };
        assert_eq!(cfg.search_box()[2], (0.0, 6000.0));
    }

    #[test]
    fn guesses_stay_in_box() {
        let lc = stub_cycle(2.0, 1.3, 11.11);
        let cfg = SynthesisConfig::default();
        for face in [Face::Compression, Face::Restitution] {
            let b = face.bounds(&cfg);
            let x = ApexState::new(9.0, 3.0);
            for g in initial_guesses(&x, face, &lc, &cfg, &ModelParams::default()) {
                for (v, (lo, hi)) in g.iter().zip(b.iter()) {
                    assert!(v >= lo && v <= hi);
                }
            }
        }
    }
}
