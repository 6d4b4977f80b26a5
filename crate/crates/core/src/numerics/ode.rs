//! Adaptive Dormand–Prince 5(4) integration with dense output and
//! directional event location.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Step-size and accuracy controls for [`integrate_to_event`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSettings {
    pub step_size_initial: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub event_time_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            step_size_initial: 1e-4,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            event_time_tol: 1e-12,
            max_steps: 100_000,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        let positive = [
            self.step_size_initial,
            self.abs_tol,
            self.rel_tol,
            self.event_time_tol,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.max_steps == 0 {
            return Err(IntegrationError::InvalidSettings);
        }
        Ok(())
    }

    /// Same settings with both error tolerances scaled by `factor`.
    pub fn scaled_tolerances(&self, factor: f64) -> Self {
        Self {
            abs_tol: self.abs_tol * factor,
            rel_tol: self.rel_tol * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IntegrationError {
    #[error("no event within {steps} integration steps")]
    MaxStepsExceeded { steps: usize },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("integration settings must be strictly positive")]
    InvalidSettings,
    #[error("at least one event function is required")]
    NoEvents,
    #[error("initial state is not finite")]
    NonFiniteInitialState,
}

/// Required sign change of a guard function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Crossing {
    /// Negative to non-negative.
    Rising,
    /// Positive to non-positive.
    Falling,
    Either,
}

impl Crossing {
    fn crossed(self, before: f64, after: f64) -> bool {
        match self {
            Crossing::Rising => before < 0.0 && after >= 0.0,
            Crossing::Falling => before > 0.0 && after <= 0.0,
            Crossing::Either => (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0),
        }
    }
}

type GuardFn<'a, const N: usize> = Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>;

/// A terminal guard: integration stops when it crosses zero in `direction`.
pub struct Event<'a, const N: usize> {
    guard: GuardFn<'a, N>,
    direction: Crossing,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new(direction: Crossing, guard: impl Fn(f64, &[f64; N]) -> f64 + 'a) -> Self {
        Self {
            guard: Box::new(guard),
            direction,
        }
    }

    pub fn rising(guard: impl Fn(f64, &[f64; N]) -> f64 + 'a) -> Self {
        Self::new(Crossing::Rising, guard)
    }

    pub fn falling(guard: impl Fn(f64, &[f64; N]) -> f64 + 'a) -> Self {
        Self::new(Crossing::Falling, guard)
    }

    pub fn eval(&self, t: f64, y: &[f64; N]) -> f64 {
        (self.guard)(t, y)
    }

    pub fn direction(&self) -> Crossing {
        self.direction
    }
}

/// Where integration stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHit<const N: usize> {
    pub index: usize,
    pub time: f64,
    pub state: [f64; N],
    pub steps: usize,
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    t0: f64,
    h: f64,
    end: f64,
    coeffs: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.end
    }

    /// Interpolated state at `t` in `[t_start, t_end]`.
    pub fn at(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.coeffs;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
        }
        out
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Hairer's dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (w, k) in terms {
        if *w == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += h * w * k[i];
        }
    }
    out
}

/// Integrates from `t = 0` until the first guard in `events` crosses zero in
/// its required direction, returning the located event.
///
/// Guards are checked at the ends of every accepted step; a crossing is then
/// bisected on the step's dense output until the bracket is narrower than
/// `event_time_tol`. The returned state is taken on the crossed side of the
/// bracket. Quantities that must share the integrator's accuracy (work
/// integrals, for example) should be carried as extra state components.
///
/// `observer` sees the dense extension of every accepted step, truncated at
/// the event on the final step.
pub fn integrate_to_event<const N: usize, F, O>(
    rhs: F,
    events: &[Event<'_, N>],
    initial_state: [f64; N],
    settings: &IntegrationSettings,
    mut observer: O,
) -> Result<EventHit<N>, IntegrationError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(&DenseStep<N>),
{
    settings.validate()?;
    if events.is_empty() {
        return Err(IntegrationError::NoEvents);
    }
    if initial_state.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFiniteInitialState);
    }

    let mut t = 0.0;
    let mut y = initial_state;
    let mut k1 = rhs(t, &y);
    let mut h = settings.step_size_initial;
    let mut guards: Vec<f64> = events.iter().map(|e| e.eval(t, &y)).collect();
    let mut accepted = 0usize;
    let mut attempts = 0usize;

    while attempts < settings.max_steps {
        attempts += 1;
        let k2 = rhs(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = rhs(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = rhs(t + h, &y_new);

        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..N {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = settings.abs_tol + settings.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = e / scale;
            err_sq += r * r;
            finite &= y_new[i].is_finite() && k7[i].is_finite();
        }
        let err = (err_sq / N as f64).sqrt();

        if !finite || !err.is_finite() {
            // Shrink aggressively; a state that stays non-finite at a tiny
            // step has genuinely diverged.
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(IntegrationError::NonFiniteState { t });
            }
            h *= 0.1;
            continue;
        }

        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            continue;
        }

        let mut coeffs = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k1[i] - ydiff;
            coeffs[0][i] = y[i];
            coeffs[1][i] = ydiff;
            coeffs[2][i] = bspl;
            coeffs[3][i] = ydiff - h * k7[i] - bspl;
            coeffs[4][i] =
                h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let dense = DenseStep {
            t0: t,
            h,
            end: t + h,
            coeffs,
        };
        let t_new = t + h;
        accepted += 1;

        let guards_new: Vec<f64> = events.iter().map(|e| e.eval(t_new, &y_new)).collect();
        let mut hit: Option<(usize, f64, f64)> = None;
        for (idx, ev) in events.iter().enumerate() {
            if !ev.direction.crossed(guards[idx], guards_new[idx]) {
                continue;
            }
            let (lo, hi) = locate(ev, &dense, t, t_new, guards[idx], settings.event_time_tol);
            if hit.is_none_or(|(_, _, best_hi)| hi < best_hi) {
                hit = Some((idx, lo, hi));
            }
        }

        if let Some((index, _lo, hi)) = hit {
            let state = if hi >= t_new { y_new } else { dense.at(hi) };
            observer(&DenseStep { end: hi, ..dense });
            return Ok(EventHit {
                index,
                time: hi,
                state,
                steps: accepted,
            });
        }

        observer(&dense);
        t = t_new;
        y = y_new;
        k1 = k7;
        guards = guards_new;
        h *= (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
    }
    Err(IntegrationError::MaxStepsExceeded {
        steps: settings.max_steps,
    })
}

/// Bisects the guard on the dense output; returns a bracket `(lo, hi)` with
/// the crossing inside and `hi - lo <= tol`.
fn locate<const N: usize>(
    event: &Event<'_, N>,
    dense: &DenseStep<N>,
    t0: f64,
    t1: f64,
    g0: f64,
    tol: f64,
) -> (f64, f64) {
    let (mut lo, mut hi) = (t0, t1);
    let mut g_lo = g0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let g_mid = event.eval(mid, &dense.at(mid));
        if event.direction.crossed(g_lo, g_mid) {
            hi = mid;
        } else {
            lo = mid;
            g_lo = g_mid;
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_observer<const N: usize>(_: &DenseStep<N>) {}

    #[test]
    fn ballistic_fall_matches_closed_form() {
        let g = 10.0;
        let touchdown = 0.3465_f64.cos();
        let y0 = 1.3;
        let events = [Event::falling(move |_, s: &[f64; 2]| s[0] - touchdown)];
        let hit = integrate_to_event(
            |_, s: &[f64; 2]| [s[1], -g],
            &events,
            [y0, 0.0],
            &IntegrationSettings::default(),
            no_observer,
        )
        .unwrap();
        let t_exact = (2.0 * (y0 - touchdown) / g).sqrt();
        assert!((hit.time - t_exact).abs() < 1e-11);
        assert!((hit.state[1] + g * t_exact).abs() < 1e-9);
        assert!((hit.time - 0.26811).abs() < 1e-5);
        assert!((hit.state[1] + 2.6811).abs() < 1e-4);
    }

    #[test]
    fn linear_guard_located_to_tolerance() {
        let settings = IntegrationSettings::default();
        let events = [Event::rising(|t, _: &[f64; 1]| t - 0.7310585)];
        let hit = integrate_to_event(|_, _| [1.0], &events, [0.0], &settings, no_observer).unwrap();
        assert!((hit.time - 0.7310585).abs() <= settings.event_time_tol);
        assert_eq!(hit.index, 0);
    }

    #[test]
    fn direction_filters_crossings() {
        // sin(t) falls through zero at pi, rises at 2 pi.
        let events = [Event::rising(|_, s: &[f64; 2]| s[0])];
        let hit = integrate_to_event(
            |_, s: &[f64; 2]| [s[1], -s[0]],
            &events,
            [0.0, 1.0],
            &IntegrationSettings::default(),
            no_observer,
        )
        .unwrap();
        assert!((hit.time - 2.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn earliest_event_wins() {
        let events = [
            Event::rising(|t, _: &[f64; 1]| t - 0.5),
            Event::rising(|t, _: &[f64; 1]| t - 0.25),
        ];
        let hit = integrate_to_event(
            |_, _| [1.0],
            &events,
            [0.0],
            &IntegrationSettings::default(),
            no_observer,
        )
        .unwrap();
        assert_eq!(hit.index, 1);
    }

    #[test]
    fn max_steps_reported() {
        let settings = IntegrationSettings {
            max_steps: 10,
            ..Default::default()
        };
        let events = [Event::rising(|t, _: &[f64; 1]| t - 1e6)];
        let err =
            integrate_to_event(|_, _| [1.0], &events, [0.0], &settings, no_observer).unwrap_err();
        assert_eq!(err, IntegrationError::MaxStepsExceeded { steps: 10 });
    }

    #[test]
    fn blow_up_is_non_finite() {
        // y' = y^2 from y = 1 diverges at t = 1.
        let events = [Event::rising(|t, _: &[f64; 1]| t - 2.0)];
        let err = integrate_to_event(
            |_, s: &[f64; 1]| [s[0] * s[0]],
            &events,
            [1.0],
            &IntegrationSettings::default(),
            no_observer,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            IntegrationError::NonFiniteState { .. } | IntegrationError::MaxStepsExceeded { .. }
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let settings = IntegrationSettings {
            abs_tol: 0.0,
            ..Default::default()
        };
        let events = [Event::rising(|t, _: &[f64; 1]| t - 1.0)];
        assert_eq!(
            integrate_to_event(|_, _| [1.0], &events, [0.0], &settings, no_observer),
            Err(IntegrationError::InvalidSettings)
        );
        let none: [Event<'_, 1>; 0] = [];
        assert_eq!(
            integrate_to_event(
                |_, _| [1.0],
                &none,
                [0.0],
                &IntegrationSettings::default(),
                no_observer
            ),
            Err(IntegrationError::NoEvents)
        );
    }

    #[test]
    fn observer_covers_whole_interval() {
        let mut covered = Vec::new();
        let events = [Event::rising(|t, _: &[f64; 1]| t - 0.3)];
        let hit = integrate_to_event(
            |t, _| [2.0 * t],
            &events,
            [0.0],
            &IntegrationSettings::default(),
            |d: &DenseStep<1>| covered.push((d.t_start(), d.t_end(), d.at(d.t_end())[0])),
        )
        .unwrap();
        assert_eq!(covered.first().unwrap().0, 0.0);
        let last = covered.last().unwrap();
        assert_eq!(last.1, hit.time);
        assert!((last.2 - hit.time * hit.time).abs() < 1e-12);
        for w in covered.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }
}
