//! Hybrid dynamics of the actuated spring-mass runner.
//!
//! One step runs apex → flight → touchdown → compression → mid-stance →
//! restitution → takeoff → flight → apex. During stance the leg pushes
//! along its axis with `P + k (l0 - l)`, where the constant part `P` is the
//! compression force before mid-stance (`ẏ = 0`) and the restitution force
//! after it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    integrate_to_event, DenseStep, Event, IntegrationError, IntegrationSettings,
};

/// Stance is abandoned if a phase lasts longer than this.
const MAX_PHASE_TIME: f64 = 2.0;
const MIN_LEG_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// kg
    pub mass: f64,
    /// Nominal (maximum) leg length, m.
    pub leg_length: f64,
    /// m/s²
    pub gravity: f64,
    /// Leg spring constant, N/m.
    pub stiffness: f64,
    /// Smoothing used for `|l̇| ≈ sqrt(l̇² + ε²)` in the work integrals, m/s.
    pub epsilon: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mass: 80.0,
            leg_length: 1.0,
            gravity: 10.0,
            stiffness: 32000.0,
            epsilon: 0.01,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.mass > 0.0
            && self.leg_length > 0.0
            && self.gravity > 0.0
            && self.stiffness >= 0.0
            && self.epsilon > 0.0
            && [
                self.mass,
                self.leg_length,
                self.gravity,
                self.stiffness,
                self.epsilon,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidParams)
        }
    }

    /// Body weight `m g`, N.
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Total mechanical energy at an apex: `m g y + m ẋ² / 2`.
    pub fn apex_energy(&self, apex: &ApexState) -> f64 {
        self.mass * self.gravity * apex.y + 0.5 * self.mass * apex.xdot * apex.xdot
    }
}

/// State on the apex section: forward speed and height (ẏ = 0 implied).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApexState {
    pub xdot: f64,
    pub y: f64,
}

impl ApexState {
    pub const fn new(xdot: f64, y: f64) -> Self {
        Self { xdot, y }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.xdot.is_finite() && self.y.is_finite() && self.xdot > 0.0 && self.y > 0.0 {
            Ok(())
        } else {
            Err(ModelError::InvalidApex(*self))
        }
    }

    /// Unweighted Euclidean distance in (m/s, m).
    pub fn distance(&self, other: &ApexState) -> f64 {
        (self.xdot - other.xdot).hypot(self.y - other.y)
    }
}

/// Per-step decision: foot angle and the two constant leg forces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    /// Foot placement angle from vertical, rad.
    pub theta: f64,
    /// Constant axial force during compression, N.
    pub compression_force: f64,
    /// Constant axial force during restitution, N.
    pub restitution_force: f64,
}

impl Control {
    pub const fn new(theta: f64, compression_force: f64, restitution_force: f64) -> Self {
        Self {
            theta,
            compression_force,
            restitution_force,
        }
    }

    /// Foot placement only; the leg is a passive spring.
    pub const fn passive(theta: f64) -> Self {
        Self::new(theta, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = (0.0..std::f64::consts::FRAC_PI_2).contains(&self.theta)
            && self.compression_force >= 0.0
            && self.restitution_force >= 0.0
            && self.compression_force.is_finite()
            && self.restitution_force.is_finite();
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidControl(*self))
        }
    }
}

/// Full planar state of the body.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FullState {
    pub x: f64,
    pub xdot: f64,
    pub y: f64,
    pub ydot: f64,
}

/// Result of one apex-to-apex step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Next apex, height measured from the ground the runner landed on.
    pub next_apex: ApexState,
    /// Horizontal apex-to-apex distance, m.
    pub distance: f64,
    /// Spring work `∫ |k (l0 - l) l̇| dt`, J.
    pub spring_work: f64,
    /// `∫ |P_c l̇| dt` over compression, J.
    pub compression_work: f64,
    /// `∫ |P_r l̇| dt` over restitution, J.
    pub restitution_work: f64,
    /// Mechanical cost of transport.
    pub mcot: f64,
    /// Largest `P + k (l0 - l)` seen during stance, N.
    pub peak_axial_force: f64,
    pub stance_time: f64,
    /// Step-frame states: x from the starting apex, y from the starting ground.
    pub touchdown: FullState,
    pub midstance: FullState,
    pub takeoff: FullState,
}

impl StepOutcome {
    pub fn total_work(&self) -> f64 {
        self.spring_work + self.compression_work + self.restitution_work
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("apex height {y} is below the touchdown height {touchdown_height}: the foot would start inside the ground")]
    LegBelowGroundAtApex { y: f64, touchdown_height: f64 },
    #[error("leg length collapsed to zero")]
    ZeroLegLength,
    #[error("vertical velocity never turned upward during stance")]
    NoMidstance,
    #[error("leg never returned to full length")]
    NoTakeoff,
    #[error("body reached the ground during stance")]
    Fell,
    #[error("horizontal velocity became non-positive")]
    BackwardMotion,
    #[error("takeoff with non-positive vertical velocity; no flight apex")]
    NoApex,
    #[error("invalid apex state {0:?}")]
    InvalidApex(ApexState),
    #[error("invalid control {0:?}")]
    InvalidControl(Control),
    #[error("invalid model parameters")]
    InvalidParams,
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Ballistic flight from an apex until the foot, held at `theta`, touches
/// ground lying `ground_height` above the starting ground (negative for a
/// drop). Returns the touchdown state in the step frame and the flight time.
pub fn flight_to_touchdown_onto(
    apex: &ApexState,
    theta: f64,
    ground_height: f64,
    params: &ModelParams,
) -> Result<(FullState, f64), ModelError> {
    let touchdown_height = params.leg_length * theta.cos() + ground_height;
    let drop = apex.y - touchdown_height;
    if drop < 0.0 {
        return Err(ModelError::LegBelowGroundAtApex {
            y: apex.y,
            touchdown_height,
        });
    }
    let time = (2.0 * drop / params.gravity).sqrt();
    let state = FullState {
        x: apex.xdot * time,
        xdot: apex.xdot,
        y: touchdown_height,
        ydot: -params.gravity * time,
    };
    Ok((state, time))
}

/// [`flight_to_touchdown_onto`] over level ground.
pub fn flight_to_touchdown(
    apex: &ApexState,
    theta: f64,
    params: &ModelParams,
) -> Result<(FullState, f64), ModelError> {
    flight_to_touchdown_onto(apex, theta, 0.0, params)
}

/// Stance equations of motion with the state relative to the contact point.
/// Returns `[ẋ, ẍ, ẏ, ÿ]`.
pub fn stance_derivative(
    state: &FullState,
    thrust: f64,
    params: &ModelParams,
) -> Result<[f64; 4], ModelError> {
    let len = state.x.hypot(state.y);
    if !(len > MIN_LEG_LENGTH) {
        return Err(ModelError::ZeroLegLength);
    }
    let force = thrust + params.stiffness * (params.leg_length - len);
    let per_mass_len = force / (params.mass * len);
    Ok([
        state.xdot,
        per_mass_len * state.x,
        state.ydot,
        per_mass_len * state.y - params.gravity,
    ])
}

/// Stance state carried by the integrator: position and velocity relative
/// to the foot, then spring work and constant-force work.
type StanceVec = [f64; 6];

fn stance_rhs(params: &ModelParams, thrust: f64) -> impl Fn(f64, &StanceVec) -> StanceVec + '_ {
    move |_, s| {
        let len = s[0].hypot(s[2]);
        if !(len > MIN_LEG_LENGTH) {
            return [f64::NAN; 6];
        }
        let spring = params.stiffness * (params.leg_length - len);
        let per_mass_len = (thrust + spring) / (params.mass * len);
        let len_rate = (s[0] * s[1] + s[2] * s[3]) / len;
        let speed = len_rate.hypot(params.epsilon);
        [
            s[1],
            per_mass_len * s[0],
            s[3],
            per_mass_len * s[2] - params.gravity,
            spring * speed,
            thrust * speed,
        ]
    }
}

fn leg_rate(s: &StanceVec) -> f64 {
    (s[0] * s[1] + s[2] * s[3]) / s[0].hypot(s[2])
}

/// Shortest leg over a phase, refined inside the step where `l̇` turns
/// from negative to positive.
struct ShortestLeg {
    min: f64,
}

impl ShortestLeg {
    fn new() -> Self {
        Self { min: f64::INFINITY }
    }

    fn observe(&mut self, step: &DenseStep<6>) {
        let (t0, t1) = (step.t_start(), step.t_end());
        let (a, b) = (step.at(t0), step.at(t1));
        self.min = self.min.min(a[0].hypot(a[2])).min(b[0].hypot(b[2]));
        if leg_rate(&a) < 0.0 && leg_rate(&b) > 0.0 {
            let (mut lo, mut hi) = (t0, t1);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if leg_rate(&step.at(mid)) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = step.at(0.5 * (lo + hi));
            self.min = self.min.min(s[0].hypot(s[2]));
        }
    }
}

/// Phase failure modes, matched by event index.
#[derive(Clone, Copy)]
enum Exit {
    Done,
    Fail(fn() -> ModelError),
}

struct PhaseResult {
    state: StanceVec,
    time: f64,
    shortest_leg: f64,
}

fn run_phase(
    params: &ModelParams,
    thrust: f64,
    start: StanceVec,
    events: &[Event<'_, 6>],
    exits: &[Exit],
    settings: &IntegrationSettings,
) -> Result<PhaseResult, ModelError> {
    let mut shortest = ShortestLeg::new();
    let hit = integrate_to_event(stance_rhs(params, thrust), events, start, settings, |d| {
        shortest.observe(d)
    })
    .map_err(|e| match e {
        IntegrationError::NonFiniteState { .. } => ModelError::ZeroLegLength,
        other => ModelError::Integration(other),
    })?;
    match exits[hit.index] {
        Exit::Done => Ok(PhaseResult {
            state: hit.state,
            time: hit.time,
            shortest_leg: shortest.min,
        }),
        Exit::Fail(make) => Err(make()),
    }
}

/// Apex-to-apex map over level ground.
pub fn simulate_step(
    apex: &ApexState,
    control: &Control,
    params: &ModelParams,
    settings: &IntegrationSettings,
) -> Result<StepOutcome, ModelError> {
    simulate_step_onto(apex, control, 0.0, params, settings)
}

/// Apex-to-apex map where the runner lands on ground `ground_height` above
/// the ground it started from. The next apex height is measured from the
/// landing ground.
pub fn simulate_step_onto(
    apex: &ApexState,
    control: &Control,
    ground_height: f64,
    params: &ModelParams,
    settings: &IntegrationSettings,
) -> Result<StepOutcome, ModelError> {
    params.validate()?;
    apex.validate()?;
    control.validate()?;
    let l0 = params.leg_length;

    let (touchdown, _flight_time) =
        flight_to_touchdown_onto(apex, control.theta, ground_height, params)?;
    let foot_x = touchdown.x + l0 * control.theta.sin();
    let to_step_frame = |s: &StanceVec| FullState {
        x: foot_x + s[0],
        xdot: s[1],
        y: ground_height + s[2],
        ydot: s[3],
    };

    let start: StanceVec = [
        -l0 * control.theta.sin(),
        touchdown.xdot,
        l0 * control.theta.cos(),
        touchdown.ydot,
        0.0,
        0.0,
    ];
    let compression_events = [
        Event::rising(|_, s: &StanceVec| s[3]),
        Event::falling(|_, s: &StanceVec| s[2]),
        Event::falling(move |_, s: &StanceVec| l0 - s[0].hypot(s[2])),
        Event::falling(|_, s: &StanceVec| s[1]),
        Event::rising(|t, _: &StanceVec| t - MAX_PHASE_TIME),
    ];
    let compression = run_phase(
        params,
        control.compression_force,
        start,
        &compression_events,
        &[
            Exit::Done,
            Exit::Fail(|| ModelError::Fell),
            Exit::Fail(|| ModelError::NoMidstance),
            Exit::Fail(|| ModelError::BackwardMotion),
            Exit::Fail(|| ModelError::NoMidstance),
        ],
        settings,
    )?;

    let mut mid = compression.state;
    let compression_work = mid[5];
    mid[5] = 0.0;
    let restitution_events = [
        Event::falling(move |_, s: &StanceVec| l0 - s[0].hypot(s[2])),
        Event::falling(|_, s: &StanceVec| s[2]),
        Event::falling(|_, s: &StanceVec| s[1]),
        Event::rising(|t, _: &StanceVec| t - MAX_PHASE_TIME),
    ];
    let restitution = run_phase(
        params,
        control.restitution_force,
        mid,
        &restitution_events,
        &[
            Exit::Done,
            Exit::Fail(|| ModelError::Fell),
            Exit::Fail(|| ModelError::BackwardMotion),
            Exit::Fail(|| ModelError::NoTakeoff),
        ],
        settings,
    )?;

    let off = restitution.state;
    if off[1] <= 0.0 || mid[1] <= 0.0 {
        return Err(ModelError::BackwardMotion);
    }
    if off[3] <= 0.0 {
        return Err(ModelError::NoApex);
    }

    let rise_time = off[3] / params.gravity;
    let takeoff = to_step_frame(&off);
    let next_apex = ApexState {
        xdot: off[1],
        y: off[2] + off[3] * off[3] / (2.0 * params.gravity),
    };
    let distance = takeoff.x + off[1] * rise_time;
    let spring_work = off[4];
    let restitution_work = off[5];
    let total = spring_work + compression_work + restitution_work;
    let peak_axial_force = (control.compression_force
        + params.stiffness * (l0 - compression.shortest_leg))
        .max(control.restitution_force + params.stiffness * (l0 - restitution.shortest_leg));

    Ok(StepOutcome {
        next_apex,
        distance,
        spring_work,
        compression_work,
        restitution_work,
        mcot: total / (params.weight() * distance),
        peak_axial_force,
        stance_time: compression.time + restitution.time,
        touchdown,
        midstance: to_step_frame(&compression.state),
        takeoff,
    })
}
