//! The implicit branch of a singular generalized equation.
//!
//! For a parameter `x` the solver first finds a direction `h` from the
//! Banach condition `b - (1/(p-1)!) T[h]^p ∈ N_C(y0 + h)` with
//! `b = -f(x, y0)`, then freezes `h` and runs the contraction iteration
//! `y ↦ L_h^{-1}(r(x, h + y))` where
//! `r(x, h + y) = A(h + y) - f(x, y0 + h + y)`. A fixed point `y*` gives the
//! branch `φ(x) = y0 + h + y*`.

use std::f64::consts::PI;

use nalgebra::linalg::SVD;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::cones::{ConeKind, Face};
use crate::error::{Error, Result};
use crate::multilinear::{power_form, PointSet, SymTensor, Vector};
use crate::pfactor::{
    build_p_factor, degeneracy_profile_with, factorial, leading_matrix, sample_rng,
    select_nearest, PFactorOperator,
};
use crate::problems::{DerivativeMode, ProblemSpec};
use crate::ser;

/// Which direction seeds the contraction iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Anchor {
    /// `p^{1/p}` times the Banach direction. Since `C` is a cone this solves
    /// `b ∈ (1/p!) T[h]^p + N_C(h)`, the leading Taylor term of `f`, and the
    /// iteration contracts for every order `p`.
    #[default]
    Taylor,
    /// The Banach direction itself. For `p >= 3` the iteration is generally
    /// not contracting from this start.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Fixed-point step tolerance, also the accepted inclusion residual.
    pub tol: f64,
    /// `‖f(x, y0)‖` at or below this takes the trivial branch.
    pub zero_tol: f64,
    pub max_iter: usize,
    /// Sign tolerance inside the face enumeration.
    pub face_tol: f64,
    pub anchor: Anchor,
    #[serde(skip)]
    pub mode: DerivativeMode,
    /// Refuse problems that are not completely degenerate up to order `p`.
    pub check_degeneracy: bool,
    pub degeneracy_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            zero_tol: 1e-12,
            max_iter: 200,
            face_tol: 1e-10,
            anchor: Anchor::Taylor,
            mode: DerivativeMode::Auto,
            check_degeneracy: true,
            degeneracy_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BanachSolution {
    #[serde(serialize_with = "ser::vector")]
    pub h: Vector,
    pub face: Face,
    /// The element of `N_C(y0 + h)` closing the condition.
    #[serde(serialize_with = "ser::vector")]
    pub normal_certificate: Vector,
    pub residual: f64,
    /// `‖h‖ / ‖f(x, y0)‖^{1/p}`.
    pub bound_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImplicitSolution {
    #[serde(serialize_with = "ser::vector")]
    pub x: Vector,
    /// Direction the iteration was anchored at (zero on the trivial branch).
    #[serde(serialize_with = "ser::vector")]
    pub h: Vector,
    #[serde(serialize_with = "ser::vector")]
    pub y_corr: Vector,
    #[serde(serialize_with = "ser::vector")]
    pub phi: Vector,
    pub inclusion_residual: f64,
    pub iterations: usize,
    pub theta_estimate: f64,
    /// `‖φ - y0‖ / ‖f(x, y0)‖^{1/p}`; zero on the trivial branch.
    pub m_ratio: f64,
    pub trivial: bool,
    pub banach: Option<BanachSolution>,
}

/// Outcome of [`cmp_iterate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    #[serde(serialize_with = "ser::vector")]
    pub point: Vector,
    pub iterations: usize,
    pub theta_estimate: f64,
    pub steps: Vec<f64>,
}

/// Steps before a growing step length counts as failure to contract.
pub const BURN_IN: usize = 5;
const THETA_WINDOW: usize = 5;

fn theta_of(steps: &[f64]) -> f64 {
    let ratios: Vec<f64> = steps
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    ratios
        .iter()
        .rev()
        .take(THETA_WINDOW)
        .fold(0.0, |m, &r| m.max(r))
}

/// Set-valued fixed-point iteration `y_{k+1}` = the point of `map(y_k)`
/// nearest to `y_k`, stopping once a step is at most `tol`.
///
/// The contraction factor is estimated as the largest ratio of successive
/// step lengths over the last five steps.
pub fn cmp_iterate<F>(map: F, y0: &Vector, tol: f64, max_iter: usize) -> Result<FixedPoint>
where
    F: Fn(&Vector) -> Result<PointSet>,
{
    let mut y = y0.clone();
    let mut steps = Vec::new();
    for k in 1..=max_iter {
        let set = map(&y)?;
        let next = select_nearest(set.points(), &y)
            .ok_or_else(|| Error::NotRegular(format!("empty inverse at iteration {k}")))?;
        let step = (&next - &y).norm();
        if !step.is_finite() {
            return Err(Error::NonConvergence {
                iterations: k,
                detail: "non-finite iterate".into(),
            });
        }
        steps.push(step);
        y = next;
        let theta = theta_of(&steps);
        if step <= tol {
            return Ok(FixedPoint {
                point: y,
                iterations: k,
                theta_estimate: theta,
                steps,
            });
        }
        if k > BURN_IN && theta >= 1.0 {
            return Err(Error::NoContraction { theta });
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        detail: format!("last step {:e}", steps.last().copied().unwrap_or(f64::NAN)),
    })
}

const NEWTON_ITERS: usize = 100;
const NEWTON_STARTS: usize = 8;
const START_SCALES: [f64; 3] = [1.0, 0.5, 0.25];
const NEWTON_ACCEPT: f64 = 1e-10;

/// A problem prepared for repeated solves: the order-`p` tensor at the base
/// point is computed once.
#[derive(Debug, Clone)]
pub struct SingularModel {
    problem: ProblemSpec,
    tensor: SymTensor,
    opts: SolveOptions,
}

impl SingularModel {
    pub fn new(problem: &ProblemSpec, opts: &SolveOptions) -> Result<Self> {
        let p = problem.order();
        if opts.check_degeneracy && p >= 2 {
            let profile = degeneracy_profile_with(problem, opts.degeneracy_tol, opts.mode)?;
            if !profile.completely_degenerate {
                return Err(Error::NotRegular(format!(
                    "derivatives below order {p} do not vanish at the base point: {:?}",
                    profile.norms
                )));
            }
        }
        let tensor = problem.derivative_tensor(p, opts.mode)?;
        Ok(SingularModel {
            problem: problem.clone(),
            tensor,
            opts: opts.clone(),
        })
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn tensor(&self) -> &SymTensor {
        &self.tensor
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    fn c_p(&self) -> f64 {
        1.0 / factorial(self.problem.order() - 1)
    }

    /// `b - (1/(p-1)!) T[h]^p`.
    fn banach_defect(&self, b: &Vector, h: &Vector) -> Result<Vector> {
        Ok(b - power_form(&self.tensor, h)? * self.c_p())
    }

    /// Solves the Banach condition at `x` face by face with multi-start
    /// damped Newton, returning the nonzero solution of least norm.
    pub fn solve_banach(&self, x: &Vector) -> Result<BanachSolution> {
        let pr = &self.problem;
        let b = -pr.eval(x, pr.y0())?;
        let bnorm = b.norm();
        if bnorm <= self.opts.zero_tol {
            return Err(Error::InvalidProblem(
                "f(x, y0) vanishes; the trivial branch applies".into(),
            ));
        }
        let p = pr.order();
        let s0 = bnorm.powf(1.0 / p as f64);
        let n = pr.dim();
        let y0 = pr.y0();
        let mut best: Option<BanachSolution> = None;
        for (fi, face) in pr.cone().faces()?.into_iter().enumerate() {
            let eq = face.equality_indices(n);
            let mut pinned = Vector::zeros(n);
            for &i in face.active() {
                pinned[i] = -y0[i];
            }
            for start in face_starts(eq.len(), fi) {
                for scale in START_SCALES {
                    let mut h = pinned.clone();
                    for (k, &i) in eq.iter().enumerate() {
                        h[i] = start[k] * s0 * scale;
                    }
                    let Some(h) = self.newton(&b, h, &eq, s0)? else {
                        continue;
                    };
                    let Some(cand) = self.check_banach(&b, h, &face, &eq, s0)? else {
                        continue;
                    };
                    let better = match &best {
                        None => true,
                        Some(bst) => cand.h.norm() < bst.h.norm() * (1.0 - 1e-12),
                    };
                    if better {
                        best = Some(cand);
                    }
                }
            }
        }
        best.ok_or(Error::BanachConditionFails)
    }

    fn newton(&self, b: &Vector, mut h: Vector, eq: &[usize], s0: f64) -> Result<Option<Vector>> {
        if eq.is_empty() {
            return Ok(Some(h));
        }
        let p = self.problem.order();
        let bnorm = b.norm();
        let restrict = |v: &Vector| Vector::from_iterator(eq.len(), eq.iter().map(|&i| v[i]));
        let mut fval = restrict(&self.banach_defect(b, &h)?);
        for _ in 0..NEWTON_ITERS {
            let fnorm = fval.norm();
            if fnorm == 0.0 {
                break;
            }
            // d/dh of -(1/(p-1)!) T[h]^p is -p (1/(p-1)!) T[h]^{p-1}
            let jac_full = leading_matrix(&self.tensor, &h)? * (-(p as f64));
            let jac = nalgebra::DMatrix::from_fn(eq.len(), eq.len(), |r, c| {
                jac_full[(eq[r], eq[c])]
            });
            let svd = SVD::new(jac, true, true);
            let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
            if smax == 0.0 {
                break;
            }
            let Ok(step) = svd.solve(&fval, 1e-15 * smax) else {
                break;
            };
            let mut alpha = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let mut trial = h.clone();
                for (k, &i) in eq.iter().enumerate() {
                    trial[i] -= alpha * step[k];
                }
                let tv = restrict(&self.banach_defect(b, &trial)?);
                if tv.norm() < fnorm {
                    h = trial;
                    fval = tv;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !improved || alpha * step.norm() <= 1e-14 * s0 {
                break;
            }
        }
        if fval.norm() <= NEWTON_ACCEPT * bnorm && h.iter().all(|c| c.is_finite()) {
            Ok(Some(h))
        } else {
            Ok(None)
        }
    }

    fn check_banach(
        &self,
        b: &Vector,
        h: Vector,
        face: &Face,
        eq: &[usize],
        s0: f64,
    ) -> Result<Option<BanachSolution>> {
        let pr = &self.problem;
        let y0 = pr.y0();
        let bnorm = b.norm();
        if h.norm() <= 1e-8 * s0 {
            return Ok(None);
        }
        let htol = self.opts.face_tol * s0.max(1e-300);
        let ntol = self.opts.face_tol * bnorm;
        let defect = self.banach_defect(b, &h)?;
        for &i in eq {
            if pr.cone().kind(i) == ConeKind::NonNeg && y0[i] + h[i] <= htol {
                return Ok(None);
            }
        }
        if face.active().iter().any(|&i| defect[i] > ntol) {
            return Ok(None);
        }
        let mut cert = Vector::zeros(pr.dim());
        for &i in face.active() {
            cert[i] = defect[i].min(0.0);
        }
        let residual = (&defect - &cert).norm();
        Ok(Some(BanachSolution {
            bound_ratio: h.norm() / bnorm.powf(1.0 / pr.order() as f64),
            h,
            face: face.clone(),
            normal_certificate: cert,
            residual,
        }))
    }

    /// `r(x, h + y) = A(h + y) - f(x, y0 + h + y)` with `A = (1/(p-1)!) T[h]^{p-1}`.
    pub fn residual_map(&self, x: &Vector, h: &Vector, y: &Vector) -> Result<Vector> {
        let a = leading_matrix(&self.tensor, h)?;
        let u = h + y;
        Ok(&a * &u - self.problem.eval(x, &(self.problem.y0() + &u))?)
    }

    fn anchor(&self, banach: &BanachSolution) -> Vector {
        match self.opts.anchor {
            Anchor::Literal => banach.h.clone(),
            Anchor::Taylor => {
                let p = self.problem.order() as f64;
                &banach.h * p.powf(1.0 / p)
            }
        }
    }

    /// The branch point `φ(x)`.
    pub fn solve_implicit(&self, x: &Vector) -> Result<ImplicitSolution> {
        let pr = &self.problem;
        let y0 = pr.y0();
        let f0 = pr.eval(x, y0)?;
        let fnorm = f0.norm();
        let trivial_residual = pr.cone().inclusion_residual(y0, &f0);
        if fnorm <= self.opts.zero_tol || trivial_residual <= self.opts.tol {
            return Ok(ImplicitSolution {
                x: x.clone(),
                h: Vector::zeros(pr.dim()),
                y_corr: Vector::zeros(pr.dim()),
                phi: y0.clone(),
                inclusion_residual: trivial_residual,
                iterations: 0,
                theta_estimate: 0.0,
                m_ratio: 0.0,
                trivial: true,
                banach: None,
            });
        }
        let banach = self.solve_banach(x)?;
        let h = self.anchor(&banach);
        let op = build_p_factor(&self.tensor, &h, pr.cone(), pr.order())?.with_shift(y0.clone())?;
        let face_tol = self.opts.face_tol;
        let map = |y: &Vector| -> Result<PointSet> {
            let z = self.residual_with(&op, x, y)?;
            Ok(op.solve_faces(&z, face_tol)?.candidates_near(y, face_tol))
        };
        let mut tol = self.opts.tol;
        let mut start = Vector::zeros(pr.dim());
        let mut iterations = 0;
        let mut theta = 0.0f64;
        for round in 0..4 {
            let fp = cmp_iterate(map, &start, tol, self.opts.max_iter)?;
            iterations += fp.iterations;
            if round == 0 {
                theta = fp.theta_estimate;
            }
            let phi = y0 + &h + &fp.point;
            let residual = pr.inclusion_residual(x, &phi)?;
            if residual <= self.opts.tol {
                let disp = (&phi - y0).norm();
                return Ok(ImplicitSolution {
                    x: x.clone(),
                    y_corr: fp.point,
                    phi,
                    inclusion_residual: residual,
                    iterations,
                    theta_estimate: theta,
                    m_ratio: disp / fnorm.powf(1.0 / pr.order() as f64),
                    trivial: false,
                    h,
                    banach: Some(banach),
                });
            }
            start = fp.point;
            tol /= 100.0;
        }
        Err(Error::NonConvergence {
            iterations,
            detail: "fixed point does not meet the inclusion residual tolerance".into(),
        })
    }

    fn residual_with(&self, op: &PFactorOperator, x: &Vector, y: &Vector) -> Result<Vector> {
        let u = op.h() + y;
        Ok(op.a() * &u - self.problem.eval(x, &(self.problem.y0() + &u))?)
    }

    /// Solves at every `x` (in parallel) and fits the exponent of
    /// `‖φ - y0‖` against `‖f(x, y0)‖`.
    pub fn scaling_study(&self, xs: &[Vector]) -> Result<ScalingReport> {
        let outcomes: Vec<Result<ImplicitSolution>> =
            xs.par_iter().map(|x| self.solve_implicit(x)).collect();
        let x0 = self.problem.x0();
        let y0 = self.problem.y0();
        let mut samples = Vec::new();
        let mut failures = Vec::new();
        let mut solutions = Vec::new();
        for (x, out) in xs.iter().zip(outcomes) {
            match out {
                Ok(sol) if !sol.trivial => {
                    let nf = self.problem.eval(x, y0)?.norm();
                    samples.push(ScalingSample {
                        norm_x: (x - x0).norm(),
                        norm_f: nf,
                        norm_phi: (&sol.phi - y0).norm(),
                    });
                    solutions.push(sol);
                }
                Ok(_) => failures.push(ScalingFailure {
                    x: x.clone(),
                    error: "trivial branch: f(x, y0) already solved".into(),
                    hypothesis_failure: false,
                }),
                Err(e) => failures.push(ScalingFailure {
                    x: x.clone(),
                    error: e.to_string(),
                    hypothesis_failure: e.is_hypothesis_failure(),
                }),
            }
        }
        let usable: Vec<&ScalingSample> = samples
            .iter()
            .filter(|s| s.norm_f > 0.0 && s.norm_phi > 0.0)
            .collect();
        if usable.len() < MIN_SCALING_SAMPLES {
            return Err(Error::InsufficientSamples {
                got: usable.len(),
                need: MIN_SCALING_SAMPLES,
            });
        }
        let pts: Vec<(f64, f64)> = usable
            .iter()
            .map(|s| (s.norm_f.ln(), s.norm_phi.ln()))
            .collect();
        let fitted_exponent = loglog_slope(&pts);
        let p = self.problem.order() as f64;
        let m_max = usable
            .iter()
            .map(|s| s.norm_phi / s.norm_f.powf(1.0 / p))
            .fold(0.0, f64::max);
        let (lo, hi) = usable.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
            (lo.min(s.norm_f), hi.max(s.norm_f))
        });
        Ok(ScalingReport {
            samples,
            fitted_exponent,
            m_max,
            span_decades: (hi / lo).log10(),
            failures,
            solutions,
        })
    }
}

const MIN_SCALING_SAMPLES: usize = 5;

/// Least-squares slope of `(u, v)` pairs.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mu = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mu).powi(2)).sum();
    sxy / sxx
}

/// Deterministic unit start directions in `R^d`.
fn face_starts(d: usize, face_index: usize) -> Vec<Vec<f64>> {
    match d {
        0 => vec![vec![]],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..NEWTON_STARTS)
            .map(|k| {
                let a = PI / 8.0 + k as f64 * PI / 4.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut rng = sample_rng(0x5eed, face_index);
            (0..NEWTON_STARTS)
                .map(|_| {
                    let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                    g.into_iter().map(|v| v / norm).collect()
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSample {
    pub norm_x: f64,
    pub norm_f: f64,
    pub norm_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFailure {
    #[serde(serialize_with = "ser::vector")]
    pub x: Vector,
    pub error: String,
    pub hypothesis_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub samples: Vec<ScalingSample>,
    /// Slope of `log ‖φ - y0‖` against `log ‖f(x, y0)‖`.
    pub fitted_exponent: f64,
    pub m_max: f64,
    /// Decades covered by `‖f(x, y0)‖` over the fitted samples.
    pub span_decades: f64,
    pub failures: Vec<ScalingFailure>,
    #[serde(skip)]
    pub solutions: Vec<ImplicitSolution>,
}

impl ScalingReport {
    /// Whitespace-separated table with a header line.
    pub fn table(&self, p: usize) -> String {
        let mut out = String::from("norm_x norm_f norm_phi ratio\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{:.16e} {:.16e} {:.16e} {:.16e}\n",
                s.norm_x,
                s.norm_f,
                s.norm_phi,
                s.norm_phi / s.norm_f.powf(1.0 / p as f64)
            ));
        }
        out
    }
}

pub fn solve_banach(problem: &ProblemSpec, x: &Vector, opts: &SolveOptions) -> Result<BanachSolution> {
    SingularModel::new(problem, opts)?.solve_banach(x)
}

pub fn residual_map(problem: &ProblemSpec, x: &Vector, h: &Vector, y: &Vector) -> Result<Vector> {
    let opts = SolveOptions {
        check_degeneracy: false,
        ..SolveOptions::default()
    };
    SingularModel::new(problem, &opts)?.residual_map(x, h, y)
}

pub fn solve_implicit(problem: &ProblemSpec, x: &Vector, opts: &SolveOptions) -> Result<ImplicitSolution> {
    SingularModel::new(problem, opts)?.solve_implicit(x)
}

pub fn scaling_study(problem: &ProblemSpec, xs: &[Vector], opts: &SolveOptions) -> Result<ScalingReport> {
    SingularModel::new(problem, opts)?.scaling_study(xs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn model(name: &str) -> SingularModel {
        SingularModel::new(&builtin(name).unwrap(), &SolveOptions::default()).unwrap()
    }

    #[test]
    fn scalar_contraction() {
        let fp = cmp_iterate(
            |y| Ok(PointSet::from_points([y / 2.0])),
            &v(&[1.0]),
            1e-9,
            200,
        )
        .unwrap();
        assert!(fp.point[0].abs() < 1e-8);
        assert!((fp.theta_estimate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_converges_at_once() {
        let fp = cmp_iterate(|y| Ok(PointSet::from_points([y.clone()])), &v(&[3.0]), 1e-9, 200)
            .unwrap();
        assert_eq!(fp.iterations, 1);
        assert_eq!(fp.point, v(&[3.0]));
    }

    #[test]
    fn expanding_map_is_rejected() {
        let r = cmp_iterate(|y| Ok(PointSet::from_points([y * 2.0])), &v(&[1.0]), 1e-9, 200);
        assert!(matches!(r, Err(Error::NoContraction { .. })));
        let r = cmp_iterate(|_| Ok(PointSet::new()), &v(&[1.0]), 1e-9, 200);
        assert!(matches!(r, Err(Error::NotRegular(_))));
        let slow = cmp_iterate(
            |y| Ok(PointSet::from_points([y * 0.999])),
            &v(&[1.0]),
            1e-9,
            10,
        );
        assert!(matches!(slow, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn banach_example1() {
        let m = model("example1");
        let s = m.solve_banach(&v(&[0.0, 2.0])).unwrap();
        assert!((&s.h - v(&[1.0, 1.0])).norm() < 1e-10);
        assert!(s.normal_certificate.norm() < 1e-12);
        assert!(s.residual < 1e-10);
        let s = m.solve_banach(&v(&[2.0, -2.0])).unwrap();
        assert!((&s.h - v(&[1.0, 0.0])).norm() < 1e-10);
        assert_eq!(s.face, Face::new(vec![1]));
        assert!((&s.normal_certificate - v(&[0.0, -2.0])).norm() < 1e-10);
    }

    #[test]
    fn residual_map_example1() {
        let m = model("example1");
        let r = m
            .residual_map(&v(&[0.0, 2.0]), &v(&[1.0, 1.0]), &v(&[0.0, 0.0]))
            .unwrap();
        assert_eq!(r, v(&[0.0, 3.0]));
    }

    #[test]
    fn implicit_example1() {
        let m = model("example1");
        let r2 = 2f64.sqrt();
        let s = m.solve_implicit(&v(&[0.0, 2.0])).unwrap();
        assert!((&s.phi - v(&[r2, r2])).norm() < 1e-9);
        assert!(s.inclusion_residual <= 1e-9);
        let s = m.solve_implicit(&v(&[2.0, -2.0])).unwrap();
        assert!((&s.phi - v(&[r2, 0.0])).norm() < 1e-9);
        assert!(s.inclusion_residual <= 1e-9);
    }

    #[test]
    fn literal_anchor_also_converges_for_p2() {
        let opts = SolveOptions {
            anchor: Anchor::Literal,
            ..SolveOptions::default()
        };
        let m = SingularModel::new(&builtin("example1").unwrap(), &opts).unwrap();
        let s = m.solve_implicit(&v(&[0.0, 2.0])).unwrap();
        let r2 = 2f64.sqrt();
        assert!((&s.phi - v(&[r2, r2])).norm() < 1e-9);
        assert!(s.theta_estimate < 0.5);
    }

    #[test]
    fn trivial_branch() {
        let m = model("example1");
        let s = m.solve_implicit(&v(&[0.0, 0.0])).unwrap();
        assert!(s.trivial);
        assert_eq!(s.phi, v(&[0.0, 0.0]));
        // -f(x, 0) = (x1, 0) with x1 < 0 already lies in N_C(0)
        let s = m.solve_implicit(&v(&[-2e-4, 0.0])).unwrap();
        assert!(s.trivial);
    }

    #[test]
    fn example2_positive_parameter() {
        let m = model("example2");
        for x in [1e-3, 1e-2, 0.1] {
            let s = m.solve_implicit(&v(&[x])).unwrap();
            // the y2 direction is cubic-flat, so only y1 is pinned tightly
            let expect = v(&[(x / 4.0).cbrt(), 0.0, 0.0, 0.0]);
            assert!((s.phi[0] - expect[0]).abs() < 1e-9 * expect[0], "{x}: {:?}", s.phi);
            assert!((&s.phi - &expect).norm() < 1e-6, "{x}: {:?}", s.phi);
            assert!(s.inclusion_residual <= 1e-9);
        }
        assert_eq!(
            m.solve_implicit(&v(&[-1e-2])),
            Err(Error::BanachConditionFails)
        );
    }

    #[test]
    fn example2_literal_anchor_does_not_contract() {
        let opts = SolveOptions {
            anchor: Anchor::Literal,
            ..SolveOptions::default()
        };
        let m = SingularModel::new(&builtin("example2").unwrap(), &opts).unwrap();
        assert!(m.solve_implicit(&v(&[1e-2])).is_err());
    }

    #[test]
    fn scaling_example1() {
        let m = model("example1");
        let xs: Vec<Vector> = (0..8)
            .map(|i| v(&[0.0, 2.0 * 10f64.powf(-4.0 + 3.0 * i as f64 / 7.0)]))
            .collect();
        let r = m.scaling_study(&xs).unwrap();
        assert!((r.fitted_exponent - 0.5).abs() < 1e-6);
        assert!(r.m_max.is_finite());
        assert!(r.failures.is_empty());
        assert_eq!(r.table(2).lines().count(), 9);
    }

    #[test]
    fn scaling_needs_five_successes() {
        let m = model("example1");
        let xs: Vec<Vector> = (1..=3).map(|i| v(&[0.0, i as f64 * 1e-2])).collect();
        assert!(matches!(
            m.scaling_study(&xs),
            Err(Error::InsufficientSamples { got: 3, need: 5 })
        ));
    }
}
