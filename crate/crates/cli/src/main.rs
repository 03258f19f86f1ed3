//! Command-line front end: load a problem, run diagnostics, solve, certify
//! tangent directions and write a JSON report.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use singular_ge::pfactor::{approximation_delta, degeneracy_profile, robinson_check};
use singular_ge::problems::{example2_nlp, parse_ncp_components};
use singular_ge::tangent::log_grid;
use singular_ge::{
    build_p_factor, builtin, certify_tangent, from_kkt, from_ncp, kernel_check, parse_nlp,
    parse_problem, strong_regularity_estimate, write_problem, BallSampler, DerivativeMode,
    Error, ProblemSpec, SingularModel, SolveOptions, TangentOptions, Vector,
};

#[derive(Parser, Debug)]
#[command(name = "singular-ge", version, about = "Singular generalized equations: diagnostics, implicit branches and tangent certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Fixed-point and residual tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample count for the randomized checks.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degeneracy profile, Robinson check, approximation modulus and, with --h,
    /// the strong p-regularity estimate.
    Check {
        problem: String,
        #[arg(long, allow_hyphen_values = true)]
        h: Option<String>,
        /// Sampling radius for the randomized checks.
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Solve the Banach condition at one parameter value.
    Banach {
        problem: String,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[command(flatten)]
        common: Common,
    },
    /// Compute the implicit branch at one parameter, or a scaling study over several.
    Solve {
        problem: String,
        /// Parameter value; repeat for a scaling study.
        #[arg(long, allow_hyphen_values = true)]
        x: Vec<String>,
        /// `log:<lo>:<hi>:<count>:<direction>`, may be repeated.
        #[arg(long, allow_hyphen_values = true)]
        x_grid: Vec<String>,
        /// Also write the plain-text scaling table here.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Use the Banach direction itself as the iteration anchor.
        #[arg(long)]
        literal_anchor: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Kernel check and tangent certificate for a direction.
    Tangent {
        problem: String,
        #[arg(long, allow_hyphen_values = true)]
        h: String,
        /// `log:<lo>:<hi>:<count>` or a comma-separated list.
        #[arg(long)]
        t_grid: Option<String>,
        #[arg(long, default_value_t = 1.5)]
        slope_min: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Rewrite a complementarity problem or a nonlinear program as a problem file.
    Reduce {
        kind: ReduceKind,
        input: String,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
    /// Dump a built-in problem.
    Builtin {
        name: String,
        #[arg(short = 'o')]
        output: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ReduceKind {
    Ncp,
    Kkt,
}

/// A failure with its exit code and, when the run got far enough, a report.
struct Failure {
    code: u8,
    error: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_hypothesis_failure() { 2 } else { 1 },
            error: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        error: msg.into(),
    }
}

fn read_text(path: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {path}: {e}")))
}

fn load_problem(path: &str) -> Result<ProblemSpec, Failure> {
    match path.strip_prefix("builtin:") {
        Some(name) => Ok(builtin(name)?),
        None => Ok(parse_problem(&read_text(path)?)?),
    }
}

fn parse_reals(s: &str) -> Result<Vector, Failure> {
    if s.trim().is_empty() {
        return Ok(Vector::zeros(0));
    }
    let vals = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| usage(format!("`{t}` is not a real number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Vector::from_vec(vals))
}

fn parse_log_spec(s: &str, with_dir: bool) -> Result<(Vec<f64>, Option<Vector>), Failure> {
    let parts: Vec<&str> = s.splitn(if with_dir { 5 } else { 4 }, ':').collect();
    let want = if with_dir { 5 } else { 4 };
    if parts.len() != want || parts[0] != "log" {
        return Err(usage(format!(
            "grid spec `{s}` is not log:<lo>:<hi>:<count>{}",
            if with_dir { ":<direction>" } else { "" }
        )));
    }
    let num = |t: &str| {
        t.parse::<f64>()
            .map_err(|_| usage(format!("`{t}` is not a real number")))
    };
    let lo = num(parts[1])?;
    let hi = num(parts[2])?;
    let count: usize = parts[3]
        .parse()
        .map_err(|_| usage(format!("`{}` is not a count", parts[3])))?;
    if !(lo > 0.0 && hi > lo) || count == 0 {
        return Err(usage(format!("grid `{s}` needs 0 < lo < hi and count >= 1")));
    }
    let dir = if with_dir {
        Some(parse_reals(parts[4])?)
    } else {
        None
    };
    Ok((log_grid(lo, hi, count), dir))
}

fn check_dim(v: &Vector, n: usize, what: &str) -> Result<(), Failure> {
    if v.len() != n {
        return Err(usage(format!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn problem_summary(p: &ProblemSpec) -> Value {
    json!({
        "param_dim": p.param_dim(),
        "dim": p.dim(),
        "cone": p.cone().to_string(),
        "order": p.order(),
        "x0": p.x0().as_slice(),
        "y0": p.y0().as_slice(),
    })
}

fn solve_options(c: &Common) -> SolveOptions {
    SolveOptions {
        tol: c.tol,
        max_iter: c.max_iter,
        ..SolveOptions::default()
    }
}

/// Result body and exit code of a report-producing command.
type Outcome = (Value, u8);

fn run_check(problem: &ProblemSpec, h: Option<&str>, radius: f64, c: &Common) -> Result<Outcome, Failure> {
    let mut out = serde_json::Map::new();
    let mut code = 0;
    out.insert("degeneracy".into(), to_json(&degeneracy_profile(problem, c.tol)?));
    out.insert("robinson_regular".into(), json!(robinson_check(problem, 1e-10)?));
    out.insert(
        "approximation_delta".into(),
        json!(approximation_delta(problem, problem.x0(), radius, c.samples, c.seed)?),
    );
    if let Some(h) = h {
        let h = parse_reals(h)?;
        check_dim(&h, problem.dim(), "--h")?;
        let t = problem.derivative_tensor(problem.order(), DerivativeMode::Auto)?;
        let op = build_p_factor(&t, &h, problem.cone(), problem.order())?
            .with_shift(problem.y0().clone())?;
        let sampler = BallSampler::new(Vector::zeros(problem.dim()), radius, c.seed);
        match strong_regularity_estimate(&op, &sampler, c.samples, 1e-10) {
            Ok(r) => {
                out.insert("strong_regularity".into(), to_json(&r));
            }
            Err(e) => {
                code = Failure::from(e.clone()).code;
                out.insert("strong_regularity_error".into(), json!(e.to_string()));
            }
        }
    }
    Ok((Value::Object(out), code))
}

fn run_solve(
    problem: &ProblemSpec,
    xs: &[String],
    grids: &[String],
    table: Option<&Path>,
    literal: bool,
    c: &Common,
) -> Result<Outcome, Failure> {
    let mut opts = solve_options(c);
    if literal {
        opts.anchor = singular_ge::Anchor::Literal;
    }
    let mut points = Vec::new();
    for x in xs {
        points.push(parse_reals(x)?);
    }
    for g in grids {
        let (ts, dir) = parse_log_spec(g, true)?;
        let dir = dir.unwrap_or_else(|| Vector::zeros(0));
        for t in ts {
            points.push(problem.x0() + &dir * t);
        }
    }
    if points.is_empty() {
        return Err(usage("solve needs --x or --x-grid"));
    }
    for p in &points {
        check_dim(p, problem.param_dim(), "x")?;
    }
    let model = SingularModel::new(problem, &opts)?;
    if points.len() == 1 && grids.is_empty() {
        let sol = model.solve_implicit(&points[0])?;
        return Ok((json!({ "implicit_solution": to_json(&sol) }), 0));
    }
    let study = model.scaling_study(&points)?;
    if let Some(path) = table {
        fs::write(path, study.table(problem.order()))
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    let code = if study.failures.iter().any(|f| f.hypothesis_failure) {
        2
    } else {
        0
    };
    Ok((json!({ "scaling": to_json(&study) }), code))
}

fn run_tangent(
    problem: &ProblemSpec,
    h: &str,
    t_grid: Option<&str>,
    slope_min: f64,
    c: &Common,
) -> Result<Outcome, Failure> {
    let h = parse_reals(h)?;
    check_dim(&h, problem.dim(), "--h")?;
    let grid = match t_grid {
        None => singular_ge::default_t_grid(),
        Some(s) if s.starts_with("log:") => parse_log_spec(s, false)?.0,
        Some(s) => parse_reals(s)?.iter().copied().collect(),
    };
    let opts = TangentOptions {
        solve: solve_options(c),
        slope_min,
        seed: c.seed,
        regularity_samples: c.samples.min(200),
        ..TangentOptions::default()
    };
    let in_kernel = kernel_check(problem, &h, &grid, opts.kernel_tol)?;
    if !in_kernel {
        return Err(Error::NotInKernel.into());
    }
    let cert = certify_tangent(problem, &h, &grid, &opts)?;
    let code = if cert.accepted { 0 } else { 2 };
    Ok((json!({ "kernel_check": in_kernel, "certificate": to_json(&cert) }), code))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_reduce(kind: ReduceKind, input: &str, output: Option<&Path>) -> Result<(), Failure> {
    let spec = match kind {
        ReduceKind::Ncp => {
            let (polys, m, p) = match input.strip_prefix("builtin:") {
                Some(name) => {
                    let b = builtin(name)?;
                    let polys = b
                        .polynomials()
                        .ok_or_else(|| usage("builtin has no polynomial form"))?
                        .to_vec();
                    (polys, b.param_dim(), Some(b.order()))
                }
                None => parse_ncp_components(&read_text(input)?)?,
            };
            from_ncp(polys, m, p)?
        }
        ReduceKind::Kkt => {
            let nlp = match input.strip_prefix("builtin:") {
                Some("example2") => example2_nlp(),
                Some(other) => return Err(usage(format!("no nonlinear program named `{other}`"))),
                None => parse_nlp(&read_text(input)?)?,
            };
            from_kkt(&nlp)?
        }
    };
    if spec.order() < 2 {
        eprintln!(
            "warning: inferred order {} is below 2; the singular solver will not accept this file",
            spec.order()
        );
    }
    write_output(output, &write_problem(&spec)?)
}

fn report_command(cmd: &Command) -> Option<(&str, &Common)> {
    match cmd {
        Command::Check { problem, common, .. }
        | Command::Banach { problem, common, .. }
        | Command::Solve { problem, common, .. }
        | Command::Tangent { problem, common, .. } => Some((problem.as_str(), common)),
        _ => None,
    }
}

fn run(cli: Cli, argv: &[String]) -> Result<u8, Failure> {
    let Some((path, common)) = report_command(&cli.command) else {
        return match &cli.command {
            Command::Reduce {
                kind,
                input,
                output,
            } => run_reduce(*kind, input, output.as_deref()).map(|_| 0),
            Command::Builtin { name, output } => {
                let spec = builtin(name)?;
                write_output(output.as_deref(), &write_problem(&spec)?).map(|_| 0)
            }
            _ => unreachable!(),
        };
    };
    let started = Instant::now();
    let problem = load_problem(path)?;
    let outcome = match &cli.command {
        Command::Check { h, radius, .. } => run_check(&problem, h.as_deref(), *radius, common),
        Command::Banach { x, .. } => (|| {
            let x = parse_reals(x)?;
            check_dim(&x, problem.param_dim(), "--x")?;
            let model = SingularModel::new(&problem, &solve_options(common))?;
            Ok((json!({ "banach_solution": to_json(&model.solve_banach(&x)?) }), 0))
        })(),
        Command::Solve {
            x,
            x_grid,
            table,
            literal_anchor,
            ..
        } => run_solve(&problem, x, x_grid, table.as_deref(), *literal_anchor, common),
        Command::Tangent {
            h,
            t_grid,
            slope_min,
            ..
        } => run_tangent(&problem, h, t_grid.as_deref(), *slope_min, common),
        _ => unreachable!(),
    };
    let (result, error, code) = match outcome {
        Ok((v, code)) => (v, Value::Null, code),
        Err(f) if f.code == 2 => (Value::Null, json!(f.error), 2),
        Err(f) => return Err(f),
    };
    let status = match code {
        0 => "ok",
        _ => "hypothesis_failure",
    };
    let rep = json!({
        "command": argv,
        "seed": common.seed,
        "tolerances": { "tol": common.tol, "max_iter": common.max_iter, "samples": common.samples },
        "problem": problem_summary(&problem),
        "status": status,
        "error": error,
        "result": result,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write_output(common.report.as_deref(), &report::to_string(&rep))?;
    if let Value::String(e) = &rep["error"] {
        eprintln!("hypothesis failure: {e}");
    }
    Ok(code)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli, &argv[1..]) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
