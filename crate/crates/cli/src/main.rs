use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cycle_funnel::dclf::BoundMode;
use cycle_funnel::funnel::InfeasiblePolicy;
use cycle_funnel::model::ApexState;
use cycle_funnel_cli::commands::{self, Example, Failure, Report, ReproduceArgs, TransitionArgs};
use cycle_funnel_cli::{CliError, RunConfig};

const THREADS_VAR: &str = "CYCLE_FUNNEL_THREADS";

#[derive(Parser)]
#[command(
    name = "cycle-funnel",
    version,
    about = "Limit cycles, ROAs, and funnel transitions for a spring-mass runner"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Decay rate of the Lyapunov function per step.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Stopping distance to the goal apex.
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Boundary samples per ROA level.
    #[arg(long, global = true)]
    n_samples: Option<usize>,
    /// ROA level increment.
    #[arg(long, global = true)]
    c_step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Find the limit cycle through an apex and print its properties.
    FixedPoint {
        #[arg(long, allow_hyphen_values = true)]
        xdot: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
    },
    /// Estimate the region of attraction of a limit cycle.
    Roa {
        #[arg(long, allow_hyphen_values = true)]
        xdot: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        /// Write the boundary polyline here.
        #[arg(long)]
        boundary: Option<PathBuf>,
    },
    /// Plan a transition through a chain of limit cycles.
    Transition {
        /// Starting apex as `xdot,y`.
        #[arg(long, value_parser = parse_apex)]
        init: ApexState,
        /// Goal apex as `xdot,y`.
        #[arg(long, value_parser = parse_apex)]
        goal: ApexState,
        /// Intermediate cycle apexes, in order.
        #[arg(long, value_parser = parse_apex)]
        via: Vec<ApexState>,
        /// Actuator bound, N.
        #[arg(long)]
        bounds: Option<f64>,
        #[arg(long, value_enum)]
        bound_mode: Option<BoundArg>,
        #[arg(long, value_enum)]
        on_infeasible: Option<PolicyArg>,
        /// Write the full plan as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Also write the table and library files into this directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Rerun one of the worked examples.
    Reproduce {
        /// 1, 2, 3a or 3b.
        #[arg(long)]
        example: Example,
        /// Directory for the CSV and JSON outputs.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Ditch depth for example 2, m.
        #[arg(long, default_value_t = 0.2)]
        ditch: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundArg {
    Constant,
    Total,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Abort,
    BestDecay,
}

fn parse_apex(s: &str) -> Result<ApexState, String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `xdot,y`, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok(ApexState::new(num(a)?, num(b)?))
}

fn config(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(g.config.as_deref())?;
    if let Some(a) = g.alpha {
        cfg.synthesis.alpha = a;
    }
    if let Some(d) = g.delta {
        cfg.planner.delta = d;
    }
    if let Some(n) = g.max_steps {
        cfg.planner.max_steps = n;
    }
    if let Some(n) = g.n_samples {
        cfg.roa.n_samples = n;
    }
    if let Some(c) = g.c_step {
        cfg.roa.c_step = c;
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        CliError::Input(format!(
            "{THREADS_VAR} must be a non-negative integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))
}

fn write_report(report: &Report, dir: Option<&Path>) -> Result<(), CliError> {
    std::io::stdout().write_all(report.stdout.as_bytes())?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        for a in &report.artifacts {
            fs::write(dir.join(&a.name), &a.contents)?;
        }
    }
    Ok(())
}

fn artifact<'a>(report: &'a Report, name: &str) -> Option<&'a str> {
    report
        .artifacts
        .iter()
        .find(|a| a.name == name)
        .map(|a| a.contents.as_str())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let mut cfg = config(&cli.global)?;
    match cli.command {
        Command::FixedPoint { xdot, y } => {
            cfg.validate()?;
            write_report(&commands::fixed_point(&cfg, ApexState::new(xdot, y))?, None)
        }
        Command::Roa { xdot, y, boundary } => {
            cfg.validate()?;
            let (report, _) = commands::roa(&cfg, ApexState::new(xdot, y))?;
            write_report(&report, None)?;
            if let (Some(path), Some(text)) = (boundary, artifact(&report, "roa_boundary.csv")) {
                fs::write(path, text)?;
            }
            Ok(())
        }
        Command::Transition {
            init,
            goal,
            via,
            bounds,
            bound_mode,
            on_infeasible,
            json,
            out_dir,
        } => {
            if bounds.is_some() {
                cfg.synthesis.actuator_bound = bounds;
            }
            match bound_mode {
                Some(BoundArg::Constant) => cfg.synthesis.bound_mode = BoundMode::ConstantForceOnly,
                Some(BoundArg::Total) => cfg.synthesis.bound_mode = BoundMode::TotalAxialForce,
                None => {}
            }
            match on_infeasible {
                Some(PolicyArg::Abort) => cfg.planner.on_infeasible = InfeasiblePolicy::Abort,
                Some(PolicyArg::BestDecay) => {
                    cfg.planner.on_infeasible = InfeasiblePolicy::BestDecay
                }
                None => {}
            }
            cfg.validate()?;
            let args = TransitionArgs { init, via, goal };
            let emit = |report: &Report| -> Result<(), CliError> {
                write_report(report, out_dir.as_deref())?;
                if let (Some(path), Some(text)) = (&json, artifact(report, "transition.json")) {
                    fs::write(path, text)?;
                }
                Ok(())
            };
            finish(commands::transition(&cfg, &args), emit)
        }
        Command::Reproduce {
            example,
            out_dir,
            ditch,
        } => {
            cfg.validate()?;
            let args = ReproduceArgs { example, ditch };
            finish(commands::reproduce(&cfg, &args), |r| {
                write_report(r, out_dir.as_deref())
            })
        }
    }
}

/// Emits whatever was produced, then surfaces the original error.
fn finish(
    result: Result<Report, Failure>,
    emit: impl Fn(&Report) -> Result<(), CliError>,
) -> Result<(), CliError> {
    match result {
        Ok(report) => emit(&report),
        Err(Failure { error, partial }) => {
            if partial != Report::default() {
                emit(&partial)?;
            }
            Err(error)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
