//! Derivative-free constrained minimization over a box.
//!
//! A feasibility phase first minimizes the largest constraint value from
//! each start. An augmented-Lagrangian loop then minimizes the objective,
//! with a bounded Nelder–Mead simplex as the inner solver. Decision
//! variables are rescaled to the unit box internally.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    /// Largest constraint value accepted as feasible.
    pub constraint_tol: f64,
    /// Spread of simplex values below which an inner solve stops.
    pub objective_tol: f64,
    /// Simplex iterations per inner solve.
    pub max_iterations: usize,
    /// Number of supplied initial guesses that are used.
    pub multistart_count: usize,
    /// Penalty multiplier applied when the violation stalls.
    pub penalty_growth: f64,
    /// Cap on augmented-Lagrangian updates per start.
    pub max_outer_iterations: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            constraint_tol: 1e-6,
            objective_tol: 1e-12,
            max_iterations: 600,
            multistart_count: 4,
            penalty_growth: 10.0,
            max_outer_iterations: 12,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let ok = self.constraint_tol > 0.0
            && self.objective_tol > 0.0
            && self.max_iterations >= 1
            && self.multistart_count >= 1
            && self.penalty_growth > 1.0
            && self.max_outer_iterations >= 1;
        if ok {
            Ok(())
        } else {
            Err(OptimizeError::InvalidSettings)
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OptimizeError {
    #[error("no start reached a point with all constraints <= tolerance (best max violation {best_violation:e})")]
    Infeasible {
        best_violation: f64,
        point: Vec<f64>,
    },
    #[error("no initial guess lies inside the bounds")]
    NoStartInBounds,
    #[error("bounds must satisfy lo <= hi with finite values")]
    InvalidBounds,
    #[error("invalid optimizer settings")]
    InvalidSettings,
}

/// Objective and constraint values (`<= 0` is feasible) at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub constraints: Vec<f64>,
}

impl Evaluation {
    pub fn max_violation(&self) -> f64 {
        self.constraints
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub constraints: Vec<f64>,
    pub evaluations: usize,
}

/// Box with an affine map to and from the unit cube.
struct UnitBox<'a> {
    bounds: &'a [(f64, f64)],
}

impl UnitBox<'_> {
    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.bounds)
            .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    fn scale_out(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.bounds)
            .map(|(s, (lo, hi))| lo + s.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len()
            && x.iter()
                .zip(self.bounds)
                .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    }
}

/// Counts calls and maps failed evaluations to +inf.
struct Counted<'a, F> {
    problem: &'a F,
    calls: usize,
}

impl<F> Counted<'_, F>
where
    F: Fn(&[f64]) -> Option<Evaluation>,
{
    fn eval(&mut self, x: &[f64]) -> Option<Evaluation> {
        self.calls += 1;
        (self.problem)(x)
            .filter(|e| e.objective.is_finite() && e.constraints.iter().all(|c| !c.is_nan()))
    }
}

struct SimplexOptions {
    initial_step: f64,
    ftol: f64,
    xtol: f64,
    max_iterations: usize,
    /// Stop as soon as the best value drops to or below this.
    target: f64,
}

/// Nelder–Mead on the unit cube with projection onto the box.
fn nelder_mead<G>(mut f: G, start: &[f64], opts: &SimplexOptions) -> (Vec<f64>, f64)
where
    G: FnMut(&[f64]) -> f64,
{
    let n = start.len();
    let project = |z: &mut Vec<f64>| z.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut z0 = start.to_vec();
    project(&mut z0);
    let f0 = f(&z0);
    simplex.push((z0.clone(), f0));
    if f0 <= opts.target {
        return (z0, f0);
    }
    for i in 0..n {
        let mut z = z0.clone();
        z[i] += if z[i] + opts.initial_step <= 1.0 {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        project(&mut z);
        let fz = f(&z);
        simplex.push((z, fz));
    }

    let by_value = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    for _ in 0..opts.max_iterations {
        simplex.sort_by(by_value);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best <= opts.target {
            break;
        }
        let diameter = simplex[1..]
            .iter()
            .map(|(z, _)| {
                z.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let spread = if worst.is_finite() {
            (worst - best).abs()
        } else {
            f64::INFINITY
        };
        if diameter <= opts.xtol || (spread <= opts.ftol && diameter <= opts.xtol.sqrt()) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (z, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(z) {
                *c += v / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut z: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            z.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            z
        };

        let zr = along(1.0);
        let fr = f(&zr);
        if fr < simplex[0].1 {
            let ze = along(2.0);
            let fe = f(&ze);
            simplex[n] = if fe < fr { (ze, fe) } else { (zr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (zr, fr);
            continue;
        }
        let (zc, fc) = if fr < simplex[n].1 {
            let z = along(0.5);
            let v = f(&z);
            (z, v)
        } else {
            let z = along(-0.5);
            let v = f(&z);
            (z, v)
        };
        if fc < fr.min(simplex[n].1) {
            simplex[n] = (zc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for (z, fz) in simplex.iter_mut().skip(1) {
            for (v, a) in z.iter_mut().zip(&anchor) {
                *v = a + 0.5 * (*v - a);
            }
            *fz = f(z);
        }
    }
    simplex.sort_by(by_value);
    let (z, v) = simplex.swap_remove(0);
    (z, v)
}

/// Restarts the simplex around its own optimum until it stops improving.
fn polished_simplex<G>(mut f: G, start: &[f64], opts: &SimplexOptions) -> (Vec<f64>, f64)
where
    G: FnMut(&[f64]) -> f64,
{
    let (mut z, mut v) = nelder_mead(&mut f, start, opts);
    for _ in 0..3 {
        if v <= opts.target {
            break;
        }
        let restart = SimplexOptions {
            initial_step: (opts.initial_step * 0.1).max(opts.xtol * 10.0),
            ..*opts
        };
        let (z2, v2) = nelder_mead(&mut f, &z, &restart);
        let improved = v2 < v - opts.ftol.max(1e-15 * v.abs());
        if v2 <= v {
            z = z2;
            v = v2;
        }
        if !improved {
            break;
        }
    }
    (z, v)
}

fn check_inputs(bounds: &[(f64, f64)], settings: &OptimizerSettings) -> Result<(), OptimizeError> {
    settings.validate()?;
    if bounds.is_empty()
        || bounds
            .iter()
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
    {
        return Err(OptimizeError::InvalidBounds);
    }
    Ok(())
}

fn usable_starts<'a>(
    unit: &UnitBox<'_>,
    initial_guesses: &'a [Vec<f64>],
    settings: &OptimizerSettings,
) -> Result<Vec<&'a Vec<f64>>, OptimizeError> {
    let starts: Vec<&Vec<f64>> = initial_guesses
        .iter()
        .filter(|x| unit.contains(x))
        .take(settings.multistart_count)
        .collect();
    if starts.is_empty() {
        Err(OptimizeError::NoStartInBounds)
    } else {
        Ok(starts)
    }
}

struct Feasible {
    point: Vec<f64>,
    eval: Evaluation,
}

fn feasibility_phase<F>(
    counted: &mut Counted<'_, F>,
    unit: &UnitBox<'_>,
    starts: &[&Vec<f64>],
    settings: &OptimizerSettings,
) -> Result<Feasible, OptimizeError>
where
    F: Fn(&[f64]) -> Option<Evaluation>,
{
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let z0 = unit.to_unit(start);
        let opts = SimplexOptions {
            initial_step: 0.05,
            ftol: 1e-14,
            xtol: 1e-10,
            max_iterations: settings.max_iterations,
            target: 0.0,
        };
        let (z, _) = polished_simplex(
            |z| {
                let x = unit.scale_out(z);
                counted
                    .eval(&x)
                    .map_or(f64::INFINITY, |e| e.max_violation())
            },
            &z0,
            &opts,
        );
        let x = unit.scale_out(&z);
        if let Some(eval) = counted.eval(&x) {
            let v = eval.max_violation();
            if v <= settings.constraint_tol {
                return Ok(Feasible { point: x, eval });
            }
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((x, v));
            }
        }
    }
    let (point, best_violation) = best.unwrap_or((starts[0].to_vec(), f64::INFINITY));
    Err(OptimizeError::Infeasible {
        best_violation,
        point,
    })
}

/// Returns the first point found with every constraint `<= constraint_tol`.
///
/// This is the feasibility phase of [`minimize_constrained`]; both functions
/// agree on which problems are infeasible.
pub fn find_feasible<F>(
    problem: F,
    bounds: &[(f64, f64)],
    initial_guesses: &[Vec<f64>],
    settings: &OptimizerSettings,
) -> Result<Vec<f64>, OptimizeError>
where
    F: Fn(&[f64]) -> Option<Evaluation>,
{
    check_inputs(bounds, settings)?;
    let unit = UnitBox { bounds };
    let starts = usable_starts(&unit, initial_guesses, settings)?;
    let mut counted = Counted {
        problem: &problem,
        calls: 0,
    };
    feasibility_phase(&mut counted, &unit, &starts, settings).map(|f| f.point)
}

/// Minimizes the objective subject to `constraints <= 0` inside `bounds`.
///
/// `problem` returns `None` where the model cannot be evaluated; such points
/// are treated as infinitely bad. Only the first `multistart_count` guesses
/// that lie inside the bounds are used. The result is the best feasible
/// point over all starts and is fully deterministic.
pub fn minimize_constrained<F>(
    problem: F,
    bounds: &[(f64, f64)],
    initial_guesses: &[Vec<f64>],
    settings: &OptimizerSettings,
) -> Result<Minimum, OptimizeError>
where
    F: Fn(&[f64]) -> Option<Evaluation>,
{
    check_inputs(bounds, settings)?;
    let unit = UnitBox { bounds };
    let starts = usable_starts(&unit, initial_guesses, settings)?;
    let mut counted = Counted {
        problem: &problem,
        calls: 0,
    };
    let feasible = feasibility_phase(&mut counted, &unit, &starts, settings)?;

    let mut best = (feasible.point.clone(), feasible.eval.clone());
    let consider = |x: Vec<f64>, e: Evaluation, best: &mut (Vec<f64>, Evaluation)| {
        if e.max_violation() <= settings.constraint_tol && e.objective < best.1.objective {
            *best = (x, e);
        }
    };

    let mut seeds: Vec<Vec<f64>> = starts.iter().map(|s| s.to_vec()).collect();
    if !seeds.contains(&feasible.point) {
        seeds.push(feasible.point.clone());
    }
    let m = feasible.eval.constraints.len();

    for seed in seeds {
        let mut z = unit.to_unit(&seed);
        let mut multipliers = vec![0.0; m];
        let mut penalty = 10.0;
        let mut last_violation = f64::INFINITY;
        let mut step = 0.05;
        for _ in 0..settings.max_outer_iterations {
            let opts = SimplexOptions {
                initial_step: step,
                ftol: settings.objective_tol,
                xtol: 1e-10,
                max_iterations: settings.max_iterations,
                target: f64::NEG_INFINITY,
            };
            let lagrangian = |counted: &mut Counted<'_, F>, z: &[f64]| -> f64 {
                let x = unit.scale_out(z);
                match counted.eval(&x) {
                    None => f64::INFINITY,
                    Some(e) => {
                        let mut l = e.objective;
                        for (g, lam) in e.constraints.iter().zip(&multipliers) {
                            let shifted = (lam + penalty * g).max(0.0);
                            l += (shifted * shifted - lam * lam) / (2.0 * penalty);
                        }
                        l
                    }
                }
            };
            let (z_new, _) = polished_simplex(|z| lagrangian(&mut counted, z), &z, &opts);
            z = z_new;
            let x = unit.scale_out(&z);
            let Some(eval) = counted.eval(&x) else { break };
            let violation = eval.max_violation().max(0.0);
            for (lam, g) in multipliers.iter_mut().zip(&eval.constraints) {
                *lam = (*lam + penalty * g).max(0.0);
            }
            let done = violation <= settings.constraint_tol * 0.1;
            consider(x, eval, &mut best);
            if done && last_violation <= settings.constraint_tol {
                break;
            }
            if violation > 0.25 * last_violation {
                penalty *= settings.penalty_growth;
            }
            last_violation = violation;
            step = 0.01;
        }
    }

    let (point, eval) = best;
    Ok(Minimum {
        point,
        value: eval.objective,
        constraints: eval.constraints,
        evaluations: counted.calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(objective: f64, constraints: Vec<f64>) -> Option<Evaluation> {
        Some(Evaluation {
            objective,
            constraints,
        })
    }

    #[test]
    fn active_constraint() {
        let min = minimize_constrained(
            |x| eval(x[0] * x[0], vec![1.0 - x[0]]),
            &[(0.0, 10.0)],
            &[vec![5.0]],
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!((min.point[0] - 1.0).abs() < 1e-5, "{:?}", min);
        assert!((min.value - 1.0).abs() < 1e-5);
        assert!(min.constraints[0] <= 1e-6);
    }

    #[test]
    fn unconstrained_quadratic() {
        let min = minimize_constrained(
            |x| eval(x[0] * x[0] + x[1] * x[1], vec![]),
            &[(-10.0, 10.0), (-10.0, 10.0)],
            &[vec![3.0, 4.0]],
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!(
            min.point[0].abs() < 1e-5 && min.point[1].abs() < 1e-5,
            "{:?}",
            min
        );
    }

    #[test]
    fn curved_constraint_against_grid_oracle() {
        let constraint = |x: f64| x * x - 2.0;
        // Grid search at 1e-4 resolution over [-5, 5].
        let oracle = (0..=100_000)
            .map(|i| -5.0 + i as f64 * 1e-4)
            .filter(|x| constraint(*x) <= 0.0)
            .fold(f64::INFINITY, f64::min);
        assert!((oracle + 2f64.sqrt()).abs() < 1e-4);

        let min = minimize_constrained(
            |x| eval(x[0], vec![constraint(x[0])]),
            &[(-5.0, 5.0)],
            &[vec![0.0]],
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!((min.point[0] - oracle).abs() < 1e-4);
        assert!((min.point[0] + 2f64.sqrt()).abs() < 1e-6, "{:?}", min);
    }

    #[test]
    fn infeasible_problem_reported() {
        let err = minimize_constrained(
            |x| eval(x[0], vec![1.0 + x[0] * x[0]]),
            &[(-1.0, 1.0)],
            &[vec![0.5]],
            &OptimizerSettings::default(),
        )
        .unwrap_err();
        match err {
            OptimizeError::Infeasible { best_violation, .. } => {
                assert!((best_violation - 1.0).abs() < 1e-6)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failed_evaluations_are_avoided() {
        // The model is undefined for x < 0.5; the minimum sits at the edge.
        let min = minimize_constrained(
            |x| {
                if x[0] < 0.5 {
                    None
                } else {
                    eval((x[0] - 0.2).powi(2), vec![])
                }
            },
            &[(0.0, 1.0)],
            &[vec![0.9]],
            &OptimizerSettings::default(),
        )
        .unwrap();
        assert!((min.point[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn start_outside_bounds_rejected() {
        let err = minimize_constrained(
            |x| eval(x[0], vec![]),
            &[(0.0, 1.0)],
            &[vec![2.0]],
            &OptimizerSettings::default(),
        )
        .unwrap_err();
        assert_eq!(err, OptimizeError::NoStartInBounds);
    }

    #[test]
    fn feasibility_agrees_with_minimizer() {
        let problem = |x: &[f64]| eval(x[0] + x[1], vec![1.0 - x[0] * x[1]]);
        let bounds = [(0.0, 3.0), (0.0, 3.0)];
        let starts = [vec![0.1, 0.1]];
        let settings = OptimizerSettings::default();
        let p = find_feasible(problem, &bounds, &starts, &settings).unwrap();
        assert!(1.0 - p[0] * p[1] <= settings.constraint_tol);
        let min = minimize_constrained(problem, &bounds, &starts, &settings).unwrap();
        assert!((min.value - 2.0).abs() < 1e-4, "{:?}", min);
    }

    #[test]
    fn repeated_calls_identical() {
        let run = || {
            minimize_constrained(
                |x| {
                    eval(
                        (x[0] - 0.3).powi(2) + (x[1] + 0.1).powi(4),
                        vec![x[0] + x[1] - 0.1],
                    )
                },
                &[(-1.0, 1.0), (-1.0, 1.0)],
                &[vec![0.9, 0.9], vec![-0.5, 0.5]],
                &OptimizerSettings::default(),
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.point, b.point);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
