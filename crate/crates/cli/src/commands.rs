//! Command bodies. Each returns the text it would print and any files to
//! write, so the binary stays a thin shell and tests can call these
//! directly.

use std::f64::consts::TAU;

use cycle_funnel::dclf::{lyapunov_value, synthesize_control, SynthesisConfig};
use cycle_funnel::funnel::{
    plan_transition, CycleLibrary, FunnelError, InfeasiblePolicy, SpeedOrder, TransitionPlan,
};
use cycle_funnel::limit_cycle::LimitCycle;
use cycle_funnel::model::{simulate_step_onto, ApexState};
use cycle_funnel::roa::{estimate_roa, RoaEstimate};

use crate::config::RunConfig;
use crate::error::{core, CliError};
use crate::format::{csv_text, g6};

/// Example 3 fixed points: start, intermediate cycles, goal.
pub const EXAMPLE3_CYCLES: [(f64, f64); 5] =
    [(2.0, 1.2), (2.7, 1.4), (3.4, 1.6), (4.2, 1.8), (5.0, 2.0)];
/// Actuator bound used by the bounded Example 3 run, in body weights.
pub const EXAMPLE3_BOUND_WEIGHTS: f64 = 12.0;

const BOUNDARY_POINTS: usize = 72;

/// A named output file and its contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn new(name: &str, contents: String) -> Self {
        Self {
            name: name.into(),
            contents,
        }
    }
}

/// What a command produced. `stdout` is printed; artifacts go to files.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub stdout: String,
    pub artifacts: Vec<Artifact>,
}

/// A command that failed after producing partial output worth keeping.
#[derive(Debug)]
pub struct Failure {
    pub error: CliError,
    pub partial: Report,
}

impl From<CliError> for Failure {
    fn from(error: CliError) -> Self {
        Self {
            error,
            partial: Report::default(),
        }
    }
}

fn find_cycle(cfg: &RunConfig, target: ApexState) -> Result<LimitCycle, CliError> {
    LimitCycle::find(&target, &cfg.model, &cfg.integration).map_err(core)
}

/// Synthesis settings for ROA estimates: actuator bounds apply to stepping,
/// not to the library.
fn library_synthesis(cfg: &RunConfig) -> SynthesisConfig {
    SynthesisConfig {
        actuator_bound: None,
        ..cfg.synthesis
    }
}

const TABLE2_HEADER: [&str; 9] = [
    "i",
    "xdot",
    "y",
    "max_eigenvalue",
    "theta",
    "s1",
    "s2",
    "E_theta",
    "MCOT",
];

fn table2_row(i: usize, lc: &LimitCycle) -> Vec<String> {
    let x = lc.apex();
    vec![
        (i + 1).to_string(),
        g6(x.xdot),
        g6(x.y),
        g6(lc.max_eigenvalue()),
        g6(lc.control().theta),
        g6(lc.shape.speed),
        g6(lc.shape.height),
        g6(lc.nominal_spring_work()),
        g6(lc.nominal_mcot()),
    ]
}

pub fn fixed_point(cfg: &RunConfig, target: ApexState) -> Result<Report, CliError> {
    let lc = find_cycle(cfg, target)?;
    Ok(Report {
        stdout: csv_text(&TABLE2_HEADER, &[table2_row(0, &lc)])?,
        artifacts: Vec::new(),
    })
}

fn boundary_rows(lc: &LimitCycle, c: f64, prefix: Option<usize>) -> Vec<Vec<String>> {
    let center = lc.apex();
    let (rx, ry) = ((c / lc.shape.speed).sqrt(), (c / lc.shape.height).sqrt());
    (0..BOUNDARY_POINTS)
        .map(|k| {
            let phi = TAU * k as f64 / BOUNDARY_POINTS as f64;
            let mut row: Vec<String> = prefix.map(|i| (i + 1).to_string()).into_iter().collect();
            // Full precision so every row sits on the level set.
            row.push((center.xdot + rx * phi.cos()).to_string());
            row.push((center.y + ry * phi.sin()).to_string());
            row
        })
        .collect()
}

pub fn roa(cfg: &RunConfig, target: ApexState) -> Result<(Report, RoaEstimate), CliError> {
    let lc = find_cycle(cfg, target)?;
    let est = estimate_roa(
        &lc,
        &cfg.synthesis,
        &cfg.model,
        &cfg.integration,
        &cfg.optimizer,
        &cfg.roa,
    )
    .map_err(core)?;
    let (wx, wy) = est
        .infeasible_witness
        .map_or((String::new(), String::new()), |w| (g6(w.xdot), g6(w.y)));
    let summary = csv_text(
        &[
            "xdot",
            "y",
            "c_max",
            "n_samples",
            "witness_xdot",
            "witness_y",
        ],
        &[vec![
            g6(target.xdot),
            g6(target.y),
            g6(est.c_max),
            est.n_samples.to_string(),
            wx,
            wy,
        ]],
    )?;
    let boundary = csv_text(&["xdot", "y"], &boundary_rows(&lc, est.c_max, None))?;
    Ok((
        Report {
            stdout: summary,
            artifacts: vec![Artifact::new("roa_boundary.csv", boundary)],
        },
        est,
    ))
}

const TABLE3_HEADER: [&str; 11] = [
    "k",
    "i",
    "xdot",
    "y",
    "theta",
    "Pc",
    "Pr",
    "E_theta_minus_nominal",
    "E_Pc",
    "E_Pr",
    "MCOT",
];

/// Step rows followed by a terminal row holding the last apex.
pub fn table3(
    lib: &CycleLibrary,
    plan: &TransitionPlan,
    goal: &ApexState,
) -> Result<String, CliError> {
    let mut rows: Vec<Vec<String>> = plan
        .steps
        .iter()
        .map(|s| {
            let lc = &lib.cycles()[s.cycle_index];
            vec![
                s.k.to_string(),
                (s.cycle_index + 1).to_string(),
                g6(s.state.xdot),
                g6(s.state.y),
                g6(s.control.theta),
                g6(s.control.compression_force),
                g6(s.control.restitution_force),
                g6(s.outcome.spring_work - lc.nominal_spring_work()),
                g6(s.outcome.compression_work),
                g6(s.outcome.restitution_work),
                g6(s.outcome.mcot),
            ]
        })
        .collect();
    let x = plan.final_state;
    let i = lib
        .select(&x, goal)
        .map_or(String::new(), |i| (i + 1).to_string());
    let mut last = vec![plan.steps.len().to_string(), i, g6(x.xdot), g6(x.y)];
    last.resize(TABLE3_HEADER.len(), String::new());
    rows.push(last);
    csv_text(&TABLE3_HEADER, &rows)
}

pub struct TransitionArgs {
    pub init: ApexState,
    pub via: Vec<ApexState>,
    pub goal: ApexState,
}

/// Library of `init`, `via`, and `goal` cycles, in that speed order.
pub fn build_library(cfg: &RunConfig, points: &[ApexState]) -> Result<CycleLibrary, CliError> {
    let direction = match (points.first(), points.last()) {
        (Some(a), Some(b)) if b.xdot < a.xdot => SpeedOrder::Decreasing,
        _ => SpeedOrder::Increasing,
    };
    CycleLibrary::build(
        points,
        direction,
        &library_synthesis(cfg),
        &cfg.model,
        &cfg.integration,
        &cfg.optimizer,
        &cfg.roa,
    )
    .map_err(core)
}

fn library_artifacts(lib: &CycleLibrary) -> Result<Vec<Artifact>, CliError> {
    let table2: Vec<Vec<String>> = lib
        .cycles()
        .iter()
        .enumerate()
        .map(|(i, lc)| {
            let mut row = table2_row(i, lc);
            row.push(g6(lc.roa_level.unwrap_or(f64::NAN)));
            row
        })
        .collect();
    let mut header = TABLE2_HEADER.to_vec();
    header.push("c_max");
    let boundaries: Vec<Vec<String>> = lib
        .cycles()
        .iter()
        .enumerate()
        .flat_map(|(i, lc)| boundary_rows(lc, lc.roa_level.unwrap_or(0.0), Some(i)))
        .collect();
    Ok(vec![
        Artifact::new("table2.csv", csv_text(&header, &table2)?),
        Artifact::new(
            "roa_boundaries.csv",
            csv_text(&["i", "xdot", "y"], &boundaries)?,
        ),
    ])
}

/// Plans a transition and renders it. On planner failure the partial table
/// is still returned inside the [`Failure`].
pub fn transition(cfg: &RunConfig, args: &TransitionArgs) -> Result<Report, Failure> {
    let mut points = vec![args.init];
    points.extend(args.via.iter().copied());
    points.push(args.goal);
    points.dedup();
    let lib = build_library(cfg, &points)?;
    let result = plan_transition(
        &args.init,
        &args.goal,
        &lib,
        &cfg.planner,
        &cfg.synthesis,
        &cfg.model,
        &cfg.integration,
        &cfg.optimizer,
    );
    let render = |plan: &TransitionPlan| -> Result<Report, CliError> {
        let mut artifacts = library_artifacts(&lib)?;
        artifacts.push(Artifact::new(
            "transition.json",
            serde_json::to_string_pretty(plan)? + "\n",
        ));
        Ok(Report {
            stdout: table3(&lib, plan, &args.goal)?,
            artifacts,
        })
    };
    match result {
        Ok(plan) => Ok(render(&plan)?),
        Err(e) => {
            let partial = match e.partial_plan() {
                Some(plan) => render(plan)?,
                None => Report::default(),
            };
            Err(Failure {
                error: core::<FunnelError>(e),
                partial,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    One,
    Two,
    ThreeA,
    ThreeB,
}

impl std::str::FromStr for Example {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" => Ok(Example::One),
            "2" => Ok(Example::Two),
            "3a" => Ok(Example::ThreeA),
            "3b" => Ok(Example::ThreeB),
            other => Err(format!(
                "unknown example {other:?}; expected 1, 2, 3a or 3b"
            )),
        }
    }
}

pub struct ReproduceArgs {
    pub example: Example,
    /// Ground drop for example 2, m.
    pub ditch: f64,
}

pub fn reproduce(cfg: &RunConfig, args: &ReproduceArgs) -> Result<Report, Failure> {
    match args.example {
        Example::One => Ok(example1(cfg)?),
        Example::Two => Ok(example2(cfg, args.ditch)?),
        Example::ThreeA => example3(cfg, None),
        Example::ThreeB => example3(cfg, Some(EXAMPLE3_BOUND_WEIGHTS * cfg.model.weight())),
    }
}

/// Two controlled steps from `{4.2, 1.48}` toward the `{5, 1.3}` cycle.
fn example1(cfg: &RunConfig) -> Result<Report, CliError> {
    let lc = find_cycle(cfg, ApexState::new(5.0, 1.3))?;
    let mut x = ApexState::new(4.2, 1.48);
    let mut rows = Vec::new();
    for k in 0..2 {
        let s = synthesize_control(
            &x,
            &lc,
            &cfg.synthesis,
            &cfg.model,
            &cfg.integration,
            &cfg.optimizer,
        )
        .map_err(core)?;
        rows.push(vec![
            k.to_string(),
            g6(x.xdot),
            g6(x.y),
            g6(s.lyapunov),
            g6(s.control.theta),
            g6(s.control.compression_force),
            g6(s.control.restitution_force),
            g6(s.outcome.mcot),
        ]);
        x = s.outcome.next_apex;
    }
    let mut last = vec!["2".into(), g6(x.xdot), g6(x.y), g6(lyapunov_value(&x, &lc))];
    last.resize(8, String::new());
    rows.push(last);
    let text = csv_text(&["k", "xdot", "y", "V", "theta", "Pc", "Pr", "MCOT"], &rows)?;
    Ok(Report {
        stdout: text.clone(),
        artifacts: vec![Artifact::new("example1.csv", text)],
    })
}

/// A drop of `ditch` metres from the `{2, 1.3}` cycle, then two controlled
/// steps back toward it.
fn example2(cfg: &RunConfig, ditch: f64) -> Result<Report, CliError> {
    if !(ditch >= 0.0) {
        return Err(CliError::Input(format!(
            "ditch depth must be >= 0, got {ditch}"
        )));
    }
    let p = &cfg.model;
    let mut lc = find_cycle(cfg, ApexState::new(2.0, 1.3))?;
    lc.roa_level = Some(1.0);
    let center = lc.apex();
    let x0 = simulate_step_onto(&center, &lc.control(), -ditch, p, &cfg.integration)
        .map_err(core)?
        .next_apex;

    let mut steps = Vec::new();
    let mut x = x0;
    for k in 0..2 {
        let s = synthesize_control(&x, &lc, &cfg.synthesis, p, &cfg.integration, &cfg.optimizer)
            .map_err(core)?;
        steps.push(cycle_funnel::funnel::StepRecord {
            k,
            cycle_index: 0,
            state: x,
            control: s.control,
            outcome: s.outcome,
            lyapunov: s.lyapunov,
            lyapunov_next: s.lyapunov_next,
            decay_met: true,
        });
        x = s.outcome.next_apex;
    }
    let plan = TransitionPlan {
        steps,
        converged: true,
        final_state: x,
    };
    let lib = CycleLibrary::from_cycles(vec![lc.clone()], SpeedOrder::Increasing).map_err(core)?;
    let table = table3(&lib, &plan, &center)?;

    let mut trajectory: Vec<Vec<String>> = plan
        .steps
        .iter()
        .map(|s| s.state)
        .chain(std::iter::once(plan.final_state))
        .enumerate()
        .map(|(k, s)| vec![k.to_string(), g6(s.xdot), g6(s.y), g6(p.apex_energy(&s))])
        .collect();
    trajectory.insert(
        0,
        vec![
            "fixed_point".into(),
            g6(center.xdot),
            g6(center.y),
            g6(p.apex_energy(&center)),
        ],
    );

    // Constant-energy line through the fixed point: m g y + m ẋ² / 2 = TE*.
    let te = p.apex_energy(&center);
    let line: Vec<Vec<String>> = (0..=50)
        .map(|j| {
            let v = center.xdot * (0.75 + 0.5 * j as f64 / 50.0);
            let y = (te - 0.5 * p.mass * v * v) / p.weight();
            vec![g6(v), g6(y)]
        })
        .collect();

    Ok(Report {
        stdout: table.clone(),
        artifacts: vec![
            Artifact::new("example2.csv", table),
            Artifact::new(
                "example2_trajectory.csv",
                csv_text(&["k", "xdot", "y", "TE"], &trajectory)?,
            ),
            Artifact::new("example2_te_line.csv", csv_text(&["xdot", "y"], &line)?),
        ],
    })
}

fn example3(cfg: &RunConfig, bound: Option<f64>) -> Result<Report, Failure> {
    let mut cfg = cfg.clone();
    if bound.is_some() {
        cfg.synthesis.actuator_bound = bound;
        cfg.planner.on_infeasible = InfeasiblePolicy::BestDecay;
    }
    let pts: Vec<ApexState> = EXAMPLE3_CYCLES
        .iter()
        .map(|&(v, y)| ApexState::new(v, y))
        .collect();
    let args = TransitionArgs {
        init: pts[0],
        via: pts[1..4].to_vec(),
        goal: pts[4],
    };
    let mut report = transition(&cfg, &args)?;
    for a in &mut report.artifacts {
        if a.name == "transition.json" {
            a.name = "table3.json".into();
        }
    }
    report
        .artifacts
        .push(Artifact::new("table3.csv", report.stdout.clone()));
    Ok(report)
}
