use std::fs;
use std::process::{Command, Output};

use cycle_funnel_cli::commands::{self, Example, ReproduceArgs};
use cycle_funnel_cli::RunConfig;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cycle-funnel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fixed_point_prints_one_row() {
    let o = bin(&["fixed-point", "--xdot", "2.7", "--y", "1.4"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.starts_with("i,xdot,y,max_eigenvalue,theta,s1,s2,E_theta,MCOT\n"));
    let r = &rows(&text)[0];
    assert_eq!(&r[..3], ["1", "2.7", "1.4"]);
    let s2: f64 = r[6].parse().unwrap();
    // Shape scales the height error so the level set spans the speed error.
    assert!((s2 - 6.25).abs() < 1e-3, "{s2}");
}

#[test]
fn apex_below_touchdown_is_an_input_error() {
    let o = bin(&["fixed-point", "--xdot", "2", "--y", "0.9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ground"));
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(
        bin(&["transition", "--init", "2", "--goal", "3,1.4"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        bin(&["--alpha", "1.5", "fixed-point", "--xdot", "2", "--y", "1.2"])
            .status
            .code(),
        Some(2)
    );
    let o = Command::new(env!("CARGO_BIN_EXE_cycle-funnel"))
        .args(["fixed-point", "--xdot", "2", "--y", "1.2"])
        .env("CYCLE_FUNNEL_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn roa_boundary_sits_on_the_level_set() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let o = bin(&[
        "roa",
        "--xdot",
        "2.7",
        "--y",
        "1.4",
        "--c-step",
        "0.25",
        "--n-samples",
        "8",
        "--boundary",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let summary = rows(&stdout(&o));
    let c: f64 = summary[0][2].parse().unwrap();
    assert!(c > 0.0 && c <= 1.0);

    let fp = rows(&stdout(&bin(&[
        "fixed-point",
        "--xdot",
        "2.7",
        "--y",
        "1.4",
    ])))[0]
        .clone();
    let (s1, s2): (f64, f64) = (fp[5].parse().unwrap(), fp[6].parse().unwrap());
    let boundary = rows(&fs::read_to_string(&path).unwrap());
    assert!(boundary.len() >= 16);
    for r in boundary {
        let (v, y): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        let level = s1 * (v - 2.7).powi(2) + s2 * (y - 1.4).powi(2);
        // s2 is printed to six digits, so allow for that rounding.
        assert!((level - c).abs() < 1e-5 * (1.0 + c), "{level} vs {c}");
    }
}

#[test]
fn transition_from_the_goal_is_a_single_terminal_row() {
    let o = bin(&["transition", "--init", "2.7,1.4", "--goal", "2.7,1.4"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(
        stdout(&o),
        "k,i,xdot,y,theta,Pc,Pr,E_theta_minus_nominal,E_Pc,E_Pr,MCOT\n0,1,2.7,1.4,,,,,,,\n"
    );
}

#[test]
fn disjoint_cycles_fail_as_numerical() {
    let o = bin(&[
        "transition",
        "--init",
        "2,1.2",
        "--goal",
        "5,2",
        "--c-step",
        "0.25",
    ]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
}

#[test]
fn short_transition_is_reproducible_and_written_out() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("plan.json");
    let args = [
        "transition",
        "--init",
        "2.7,1.4",
        "--goal",
        "3.4,1.6",
        "--json",
        json.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ];
    let a = bin(&args);
    let b = bin(&args);
    assert!(a.status.success(), "{a:?}");
    assert_eq!(a.stdout, b.stdout);
    let table = rows(&stdout(&a));
    let last = table.last().unwrap();
    assert_eq!(last[1], "2");
    assert!(last[4..].iter().all(String::is_empty));
    let plan: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(plan["converged"], true);
    assert_eq!(plan["steps"].as_array().unwrap().len(), table.len() - 1);
    for f in ["table2.csv", "roa_boundaries.csv", "transition.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"model": {"mass": 60}}"#).unwrap();
    let base = rows(&stdout(&bin(&[
        "fixed-point",
        "--xdot",
        "2.7",
        "--y",
        "1.4",
    ])))[0]
        .clone();
    let o = bin(&[
        "fixed-point",
        "--xdot",
        "2.7",
        "--y",
        "1.4",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let light = rows(&stdout(&o))[0].clone();
    assert_ne!(base[4], light[4]);

    fs::write(&cfg, r#"{"model": {"mas": 60}}"#).unwrap();
    let o = bin(&[
        "fixed-point",
        "--xdot",
        "2.7",
        "--y",
        "1.4",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn example_one_decays_by_alpha_each_step() {
    let r = commands::reproduce(
        &RunConfig::default(),
        &ReproduceArgs {
            example: Example::One,
            ditch: 0.2,
        },
    )
    .unwrap();
    let v: Vec<f64> = rows(&r.stdout)
        .iter()
        .map(|r| r[3].parse().unwrap())
        .collect();
    assert_eq!(v.len(), 3);
    assert!((v[0] - 1.0).abs() < 1e-3);
    assert!(
        v[1] <= 0.1 * v[0] + 1e-5 && v[2] <= 0.1 * v[1] + 1e-5,
        "{v:?}"
    );
}

#[test]
fn example_two_starts_from_the_ditch_landing() {
    let r = commands::reproduce(
        &RunConfig::default(),
        &ReproduceArgs {
            example: Example::Two,
            ditch: 0.2,
        },
    )
    .unwrap();
    let t = rows(&r.stdout);
    assert_eq!(t.len(), 3);
    // Dropping raises the apex relative to the new ground and slows nothing
    // down much: the excess energy is almost all height.
    let (v0, y0): (f64, f64) = (t[0][2].parse().unwrap(), t[0][3].parse().unwrap());
    assert!(
        (y0 - 1.5).abs() < 0.02 && (v0 - 1.96).abs() < 0.02,
        "{v0} {y0}"
    );
    assert!(r.artifacts.iter().any(|a| a.name == "example2_te_line.csv"));
    assert!(commands::reproduce(
        &RunConfig::default(),
        &ReproduceArgs {
            example: Example::Two,
            ditch: -1.0,
        },
    )
    .is_err());
}
