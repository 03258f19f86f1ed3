//! Tangent directions to the solution set `M = {y : 0 ∈ f(x0, y) + N_C(y)}`.
//!
//! A direction `h̄` is certified when it lies in the p-kernel and, for each
//! `t` on a grid, the contraction iteration built on `L_{t h̄}` produces a
//! correction `w(t)` with `y0 + t h̄ + w(t) ∈ M` and `‖w(t)‖ = o(t)` at grid
//! scale.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::multilinear::{power_form, PointSet, Vector};
use crate::pfactor::{build_p_factor, strong_regularity_estimate, BallSampler, RegularityReport};
use crate::problems::ProblemSpec;
use crate::ser;
use crate::solver::{cmp_iterate, loglog_slope, SolveOptions};

/// Eight log-spaced points in `[1e-3, 1e-1]`.
pub fn default_t_grid() -> Vec<f64> {
    log_grid(1e-3, 1e-1, 8)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentOptions {
    pub solve: SolveOptions,
    /// Smallest accepted log-log slope of `‖w(t)‖` against `t`.
    pub slope_min: f64,
    pub kernel_tol: f64,
    /// Pairs drawn for each regularity diagnostic; zero skips it.
    pub regularity_samples: usize,
    pub seed: u64,
}

impl Default for TangentOptions {
    fn default() -> Self {
        TangentOptions {
            solve: SolveOptions::default(),
            slope_min: 1.5,
            kernel_tol: 1e-9,
            regularity_samples: 200,
            seed: 0,
        }
    }
}

/// Strong p-regularity estimate at one `t`, or the reason it failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityProbe {
    pub t: f64,
    pub report: Option<RegularityReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentCertificate {
    #[serde(serialize_with = "ser::vector")]
    pub h_bar: Vector,
    pub t_grid: Vec<f64>,
    pub w_norms: Vec<f64>,
    pub per_t_residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    /// `+∞` when every correction vanishes to roundoff.
    pub loglog_slope: f64,
    /// `‖w(t)‖ / t` does not grow as `t` decreases (10% slack).
    pub ratio_decreasing: bool,
    pub accepted: bool,
    /// Diagnostic only; the premise is reported, not enforced.
    pub regularity: Vec<RegularityProbe>,
}

fn check_direction(problem: &ProblemSpec, h_bar: &Vector) -> Result<()> {
    if h_bar.len() != problem.dim() {
        return Err(Error::Dimension(format!(
            "direction has length {}, problem has {} unknowns",
            h_bar.len(),
            problem.dim()
        )));
    }
    if h_bar.iter().all(|&c| c == 0.0) {
        return Err(Error::DegenerateDirection);
    }
    Ok(())
}

/// Whether `0 ∈ T[t h̄]^p + N_C(y0 + t h̄)` at every `t` of the grid, with
/// `T` the order-`p` derivative at the base point.
pub fn kernel_check(problem: &ProblemSpec, h_bar: &Vector, t_grid: &[f64], tol: f64) -> Result<bool> {
    check_direction(problem, h_bar)?;
    let t = problem.derivative_tensor(problem.order(), Default::default())?;
    for &s in t_grid {
        let h = h_bar * s;
        let v = power_form(&t, &h)?;
        let at = problem.y0() + &h;
        if !(problem.cone().inclusion_residual(&at, &v) <= tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

struct CurvePoint {
    w_norm: f64,
    residual: f64,
    iterations: usize,
}

/// Builds the curve correction `w(t h̄)` on the grid and decides whether
/// `h̄` is a tangent direction.
pub fn certify_tangent(
    problem: &ProblemSpec,
    h_bar: &Vector,
    t_grid: &[f64],
    opts: &TangentOptions,
) -> Result<TangentCertificate> {
    check_direction(problem, h_bar)?;
    if t_grid.len() < 2 {
        return Err(Error::InsufficientSamples {
            got: t_grid.len(),
            need: 2,
        });
    }
    if t_grid.iter().any(|&t| !(t > 0.0)) || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidProblem(
            "t grid must be positive and increasing".into(),
        ));
    }
    if !kernel_check(problem, h_bar, t_grid, opts.kernel_tol)? {
        return Err(Error::NotInKernel);
    }
    let p = problem.order();
    let tensor = problem.derivative_tensor(p, opts.solve.mode)?;
    let y0 = problem.y0().clone();
    let x0 = problem.x0().clone();
    let sopts = &opts.solve;

    let points: Vec<CurvePoint> = t_grid
        .par_iter()
        .map(|&t| -> Result<CurvePoint> {
            let h = h_bar * t;
            let op = build_p_factor(&tensor, &h, problem.cone(), p)?.with_shift(y0.clone())?;
            let map = |w: &Vector| -> Result<PointSet> {
                let u = &h + w;
                let z = op.a() * &u - problem.eval(&x0, &(&y0 + &u))?;
                Ok(op
                    .solve_faces(&z, sopts.face_tol)?
                    .candidates_near(w, sopts.face_tol))
            };
            let mut start = Vector::zeros(problem.dim());
            let mut tol = sopts.tol * t;
            let mut iterations = 0;
            for _ in 0..4 {
                let fp = cmp_iterate(map, &start, tol, sopts.max_iter)?;
                iterations += fp.iterations;
                let residual = problem.inclusion_residual(&x0, &(&y0 + &h + &fp.point))?;
                if residual <= sopts.tol {
                    return Ok(CurvePoint {
                        w_norm: fp.point.norm(),
                        residual,
                        iterations,
                    });
                }
                start = fp.point;
                tol /= 100.0;
            }
            Err(Error::NonConvergence {
                iterations,
                detail: format!("curve point at t = {t:e} misses the inclusion tolerance"),
            })
        })
        .collect::<Result<_>>()?;

    let w_norms: Vec<f64> = points.iter().map(|c| c.w_norm).collect();
    let residuals: Vec<f64> = points.iter().map(|c| c.residual).collect();
    let fit: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&w_norms)
        .filter(|(t, w)| **w > 1e-13 * **t)
        .map(|(t, w)| (t.ln(), w.ln()))
        .collect();
    let slope = if fit.len() < 2 {
        f64::INFINITY
    } else {
        loglog_slope(&fit)
    };
    let ratios: Vec<f64> = t_grid.iter().zip(&w_norms).map(|(t, w)| w / t).collect();
    let ratio_decreasing = ratios
        .windows(2)
        .zip(t_grid)
        .all(|(r, t)| r[0] <= 1.1 * r[1] + 1e-13 * t);
    let accepted = residuals.iter().all(|&r| r <= sopts.tol)
        && slope >= opts.slope_min
        && ratio_decreasing;

    let regularity = if opts.regularity_samples >= 2 {
        let mid = t_grid.len() / 2;
        let mut probe_ts = vec![t_grid[0], t_grid[mid], t_grid[t_grid.len() - 1]];
        probe_ts.dedup();
        probe_ts
            .into_iter()
            .map(|t| regularity_probe(problem, &tensor, h_bar, t, opts))
            .collect()
    } else {
        Vec::new()
    };

    Ok(TangentCertificate {
        h_bar: h_bar.clone(),
        t_grid: t_grid.to_vec(),
        w_norms,
        per_t_residuals: residuals,
        iterations: points.iter().map(|c| c.iterations).collect(),
        loglog_slope: slope,
        ratio_decreasing,
        accepted,
        regularity,
    })
}

fn regularity_probe(
    problem: &ProblemSpec,
    tensor: &crate::multilinear::SymTensor,
    h_bar: &Vector,
    t: f64,
    opts: &TangentOptions,
) -> RegularityProbe {
    let outcome = build_p_factor(tensor, &(h_bar * t), problem.cone(), problem.order())
        .and_then(|op| op.with_shift(problem.y0().clone()))
        .and_then(|op| {
            let radius = t.powi(problem.order() as i32);
            let sampler = BallSampler::new(Vector::zeros(problem.dim()), radius, opts.seed);
            strong_regularity_estimate(&op, &sampler, opts.regularity_samples, opts.solve.face_tol)
        });
    match outcome {
        Ok(report) => RegularityProbe {
            t,
            report: Some(report),
            error: None,
        },
        Err(e) => RegularityProbe {
            t,
            report: None,
            error: Some(e.to_string()),
        },
    }
}
