//! Period-one limit cycles of the passive runner, their Poincaré-map
//! stability, and the diagonal Lyapunov shape attached to each.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{simulate_step, ApexState, Control, ModelError, ModelParams, StepOutcome};
use crate::numerics::{eig_2x2, solve_scalar_root, IntegrationSettings, Matrix2, RootError};

/// Foot-angle search interval, rad.
pub const THETA_BRACKET: (f64, f64) = (0.01, 0.8);
/// Largest accepted `|F(x*, u*) - x*|` in either coordinate.
pub const FIXED_POINT_TOL: f64 = 1e-6;
/// Relative finite-difference step for the Poincaré-map Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-5;

const SCAN_POINTS: usize = 80;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CycleError {
    #[error("no passive foot angle in {lo}..{hi} rad closes a cycle through {target:?}")]
    NoRoot { target: ApexState, lo: f64, hi: f64 },
    #[error("fixed-point residual {residual:e} exceeds tolerance")]
    ResidualTooLarge { residual: f64 },
    #[error("apex height {y} does not exceed the leg length {leg_length}")]
    DegenerateHeight { y: f64, leg_length: f64 },
    #[error(transparent)]
    Simulation(#[from] ModelError),
}

/// A passive gait `x* = F(x*, u*)` with `P_c = P_r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub apex: ApexState,
    pub control: Control,
    /// The nominal step from `apex` under `control`.
    pub nominal: StepOutcome,
}

impl FixedPoint {
    pub fn residual(&self) -> f64 {
        (self.nominal.next_apex.xdot - self.apex.xdot)
            .abs()
            .max((self.nominal.next_apex.y - self.apex.y).abs())
    }
}

/// `V(x) = s1 (ẋ - ẋ*)² + s2 (y - y*)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeMatrix {
    /// Weight on the speed axis, s1.
    pub speed: f64,
    /// Weight on the height axis, s2.
    pub height: f64,
}

/// A limit cycle with its stability data, Lyapunov shape, and (once
/// estimated) region-of-attraction level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    pub fixed_point: FixedPoint,
    pub jacobian: Matrix2,
    /// Eigenvalue magnitudes, largest first.
    pub eigenvalues: (f64, f64),
    pub shape: ShapeMatrix,
    /// Largest certified level `c_max` of the Lyapunov function, if estimated.
    pub roa_level: Option<f64>,
}

impl LimitCycle {
    /// Finds the fixed point through `target` and characterizes it.
    pub fn find(
        target: &ApexState,
        params: &ModelParams,
        settings: &IntegrationSettings,
    ) -> Result<Self, CycleError> {
        let fixed_point = find_fixed_point(target, params, settings)?;
        Self::from_fixed_point(fixed_point, params, settings)
    }

    pub fn from_fixed_point(
        fixed_point: FixedPoint,
        params: &ModelParams,
        settings: &IntegrationSettings,
    ) -> Result<Self, CycleError> {
        let shape = build_shape_matrix(&fixed_point.apex, params)?;
        let jacobian = poincare_jacobian(&fixed_point, params, settings, JACOBIAN_STEP)?;
        Ok(Self {
            fixed_point,
            jacobian,
            eigenvalues: eig_2x2(&jacobian),
            shape,
            roa_level: None,
        })
    }

    pub fn apex(&self) -> ApexState {
        self.fixed_point.apex
    }

    pub fn control(&self) -> Control {
        self.fixed_point.control
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.0
    }

    /// Spring work of the nominal step, J.
    pub fn nominal_spring_work(&self) -> f64 {
        self.fixed_point.nominal.spring_work
    }

    pub fn nominal_mcot(&self) -> f64 {
        self.fixed_point.nominal.mcot
    }
}

/// Searches the passive foot angle whose step returns to `target`.
///
/// With zero thrust the step conserves energy, so matching the speed also
/// matches the height; the search is a scalar root solve in `θ` on
/// `ẋ_next(θ) - ẋ_target`. The first sign change on a uniform scan of
/// [`THETA_BRACKET`] is refined with Brent's method.
pub fn find_fixed_point(
    target: &ApexState,
    params: &ModelParams,
    settings: &IntegrationSettings,
) -> Result<FixedPoint, CycleError> {
    params.validate()?;
    target.validate()?;
    let (lo, hi) = THETA_BRACKET;
    let lowest_touchdown = params.leg_length * lo.cos();
    if target.y < lowest_touchdown {
        return Err(ModelError::LegBelowGroundAtApex {
            y: target.y,
            touchdown_height: lowest_touchdown,
        }
        .into());
    }

    let speed_error = |theta: f64| -> Option<f64> {
        simulate_step(target, &Control::passive(theta), params, settings)
            .ok()
            .map(|out| out.next_apex.xdot - target.xdot)
    };

    let grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / SCAN_POINTS as f64)
        .collect();
    let mut previous: Option<(f64, f64)> = None;
    let mut bracket = None;
    for &theta in &grid {
        match speed_error(theta) {
            Some(r) => {
                if let Some((t_prev, r_prev)) = previous {
                    if r_prev.signum() != r.signum() || r == 0.0 {
                        bracket = Some((t_prev, theta));
                        break;
                    }
                }
                previous = Some((theta, r));
            }
            None => previous = None,
        }
    }
    let Some(bracket) = bracket else {
        return Err(CycleError::NoRoot {
            target: *target,
            lo,
            hi,
        });
    };

    let theta = solve_scalar_root(
        |theta| speed_error(theta).unwrap_or(f64::NAN),
        bracket,
        1e-13,
    )
    .map_err(|e: RootError| match e {
        RootError::NoSignChange { .. } | RootError::InvalidBracket { .. } => CycleError::NoRoot {
            target: *target,
            lo,
            hi,
        },
    })?;
    let control = Control::passive(theta);
    let nominal = simulate_step(target, &control, params, settings)?;
    let fixed_point = FixedPoint {
        apex: *target,
        control,
        nominal,
    };
    let residual = fixed_point.residual();
    if residual > FIXED_POINT_TOL {
        return Err(CycleError::ResidualTooLarge { residual });
    }
    Ok(fixed_point)
}

/// Central-difference Jacobian of the apex map at the fixed point, with
/// steps of `h_rel` times each coordinate.
pub fn poincare_jacobian(
    fixed_point: &FixedPoint,
    params: &ModelParams,
    settings: &IntegrationSettings,
    h_rel: f64,
) -> Result<Matrix2, ModelError> {
    let x = fixed_point.apex;
    let u = fixed_point.control;
    let map = |xdot: f64, y: f64| -> Result<ApexState, ModelError> {
        simulate_step(&ApexState::new(xdot, y), &u, params, settings).map(|o| o.next_apex)
    };
    let hx = h_rel * x.xdot.abs().max(1e-3);
    let hy = h_rel * x.y.abs().max(1e-3);
    let (px, mx) = (map(x.xdot + hx, x.y)?, map(x.xdot - hx, x.y)?);
    let (py, my) = (map(x.xdot, x.y + hy)?, map(x.xdot, x.y - hy)?);
    Ok([
        [
            (px.xdot - mx.xdot) / (2.0 * hx),
            (py.xdot - my.xdot) / (2.0 * hy),
        ],
        [(px.y - mx.y) / (2.0 * hx), (py.y - my.y) / (2.0 * hy)],
    ])
}

/// `S = diag{1, 1/(y* - l0)²}`: the unit level set touches `y = l0`
/// directly below the fixed point.
pub fn build_shape_matrix(
    apex: &ApexState,
    params: &ModelParams,
) -> Result<ShapeMatrix, CycleError> {
    let clearance = apex.y - params.leg_length;
    if !(clearance > 0.0) {
        return Err(CycleError::DegenerateHeight {
            y: apex.y,
            leg_length: params.leg_length,
        });
    }
    Ok(ShapeMatrix {
        speed: 1.0,
        height: 1.0 / (clearance * clearance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn shape_matrix_values() {
        let p = params();
        let s = |y| {
            build_shape_matrix(&ApexState::new(2.0, y), &p)
                .unwrap()
                .height
        };
        assert!((s(1.2) - 25.0).abs() < 1e-9);
        assert!((s(1.3) - 11.11).abs() < 1e-2);
        assert!((s(2.0) - 1.0).abs() < 1e-12);
        assert!(matches!(
            build_shape_matrix(&ApexState::new(2.0, 1.0), &p),
            Err(CycleError::DegenerateHeight { .. })
        ));
    }

    #[test]
    fn tangency_point_on_unit_level() {
        let p = params();
        for y in [1.05, 1.2, 1.37, 2.4] {
            let s = build_shape_matrix(&ApexState::new(3.0, y), &p).unwrap();
            assert!((s.height * (p.leg_length - y).powi(2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_at_five_metres_per_second() {
        let fp = find_fixed_point(
            &ApexState::new(5.0, 1.3),
            &params(),
            &IntegrationSettings::default(),
        )
        .unwrap();
        assert!(
            (fp.control.theta - 0.3465).abs() < 2e-3,
            "{}",
            fp.control.theta
        );
        assert!(fp.residual() <= FIXED_POINT_TOL);
    }

    #[test]
    fn low_apex_rejected() {
        let err = find_fixed_point(
            &ApexState::new(2.0, 0.9),
            &params(),
            &IntegrationSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            CycleError::Simulation(ModelError::LegBelowGroundAtApex { .. })
        ));
    }

    #[test]
    fn one_unit_eigenvalue() {
        let lc = LimitCycle::find(
            &ApexState::new(2.0, 1.2),
            &params(),
            &IntegrationSettings::default(),
        )
        .unwrap();
        assert!(
            (lc.eigenvalues.1 - 1.0).abs() < 1e-3,
            "{:?}",
            lc.eigenvalues
        );
        assert!(
            (lc.max_eigenvalue() - 1.5958).abs() < 0.02,
            "{:?}",
            lc.eigenvalues
        );
    }
}
