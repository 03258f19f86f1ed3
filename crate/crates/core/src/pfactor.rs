//! The p-factor operator `L_h(y) = A(h + y) + N_C(shift + h + y)` with
//! `A = (1/(p-1)!) T[h]^{p-1}`, its set-valued inverse, and the regularity
//! diagnostics built on it.
//!
//! The inverse is an affine variational inequality over an orthant-product
//! cone. It is solved exactly by walking the faces of the cone: on each face
//! the active coordinates are pinned to zero, the remaining rows must hold
//! with equality, and the candidate is kept when the sign conditions hold.

use nalgebra::linalg::SVD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::cones::{ConeKind, ConeSpec, Face, ACTIVITY_TOL};
use crate::error::{Error, Result};
use crate::multilinear::{contract, hausdorff, power_form, Matrix, PointSet, SymTensor, Vector};
use crate::problems::{DerivativeMode, ProblemSpec};
use crate::ser;

/// Relative pivot threshold for the rank decision on a face subsystem.
pub const RANK_TOL: f64 = 1e-10;

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `(1/(p-1)!) T[h]^{p-1}` as an `out_dim × in_dim` matrix.
pub fn leading_matrix(tensor: &SymTensor, h: &Vector) -> Result<Matrix> {
    let p = tensor.order();
    let m = if p == 1 {
        tensor.to_matrix()?
    } else {
        contract(tensor, h, p - 1)?.to_matrix()?
    };
    Ok(m / factorial(p - 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PFactorOperator {
    a: Matrix,
    h: Vector,
    shift: Vector,
    cone: ConeSpec,
    p: usize,
}

/// Builds `L_h` from the order-`p` derivative tensor.
pub fn build_p_factor(
    tensor: &SymTensor,
    h: &Vector,
    cone: &ConeSpec,
    p: usize,
) -> Result<PFactorOperator> {
    if tensor.order() != p {
        return Err(Error::Dimension(format!(
            "order-{} tensor given for p = {p}",
            tensor.order()
        )));
    }
    if tensor.out_dim() != tensor.in_dim() {
        return Err(Error::Dimension("p-factor tensor must be square".into()));
    }
    if h.len() != tensor.in_dim() {
        return Err(Error::Dimension(format!(
            "h has length {}, tensor acts on R^{}",
            h.len(),
            tensor.in_dim()
        )));
    }
    if h.iter().all(|&c| c == 0.0) {
        return Err(Error::DegenerateDirection);
    }
    PFactorOperator::from_matrix(leading_matrix(tensor, h)?, h.clone(), cone.clone(), p)
}

impl PFactorOperator {
    /// Operator with a prescribed matrix, useful for linear problems and tests.
    pub fn from_matrix(a: Matrix, h: Vector, cone: ConeSpec, p: usize) -> Result<Self> {
        let n = cone.dim();
        if a.nrows() != n || a.ncols() != n || h.len() != n {
            return Err(Error::Dimension(format!(
                "operator needs a {n}x{n} matrix and h in R^{n}"
            )));
        }
        if p == 0 {
            return Err(Error::InvalidProblem("order p must be positive".into()));
        }
        Ok(PFactorOperator {
            a,
            h,
            shift: Vector::zeros(n),
            cone,
            p,
        })
    }

    /// Moves the cone apex: the operator then uses `N_C(shift + h + y)`.
    pub fn with_shift(mut self, shift: Vector) -> Result<Self> {
        if shift.len() != self.dim() {
            return Err(Error::Dimension("shift length".into()));
        }
        self.shift = shift;
        Ok(self)
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn h(&self) -> &Vector {
        &self.h
    }

    pub fn shift(&self) -> &Vector {
        &self.shift
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.cone.dim()
    }

    /// Distance from `z` to `L_h(y)`; `+∞` when `shift + h + y` leaves `C`.
    pub fn residual(&self, y: &Vector, z: &Vector) -> f64 {
        let u = &self.h + y;
        let v = &self.shift + &u;
        self.cone.inclusion_residual(&v, &(&self.a * &u - z))
    }

    /// All faces' solutions of `z ∈ L_h(y)`, without failing on an empty set.
    pub fn solve_faces(&self, z: &Vector, tol: f64) -> Result<InverseSolveResult> {
        let mut res = face_solve(&self.a, &self.cone, &self.shift, z, tol)?;
        res.translate(&(-&self.h));
        Ok(res)
    }

    /// `L_h^{-1}(z)`; an empty result is reported as [`Error::NotInvertible`].
    pub fn invert(&self, z: &Vector, tol: f64) -> Result<InverseSolveResult> {
        let res = self.solve_faces(z, tol)?;
        if res.points.is_empty() {
            return Err(Error::NotInvertible {
                degenerate_faces: res.degenerate_faces.len(),
            });
        }
        Ok(res)
    }
}

/// Solution set of a rank-deficient but consistent face subsystem: the
/// affine set `particular + span(basis)` cut by `ineq_a · y <= ineq_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub particular: Vector,
    /// Orthonormal columns spanning the free directions.
    pub basis: Matrix,
    pub ineq_a: Matrix,
    pub ineq_b: Vector,
}

impl AffinePiece {
    /// Orthogonal projection onto the affine hull.
    pub fn project(&self, y: &Vector) -> Vector {
        let d = y - &self.particular;
        &self.particular + &self.basis * (self.basis.transpose() * d)
    }

    pub fn satisfies(&self, y: &Vector, tol: f64) -> bool {
        (&self.ineq_a * y - &self.ineq_b).iter().all(|&v| v <= tol)
    }

    fn translate(&mut self, d: &Vector) {
        self.ineq_b += &self.ineq_a * d;
        self.particular += d;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateFace {
    pub face: Face,
    pub rank: usize,
    /// Present when the face equations are consistent.
    #[serde(skip)]
    pub piece: Option<AffinePiece>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseSolveResult {
    #[serde(serialize_with = "ser::point_set")]
    pub points: PointSet,
    pub face_tags: Vec<Face>,
    pub degenerate_faces: Vec<DegenerateFace>,
}

impl InverseSolveResult {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// No face subsystem was rank-deficient.
    pub fn is_regular(&self) -> bool {
        self.degenerate_faces.is_empty()
    }

    /// Point closest to `y`; ties go to the smaller norm, then lexicographic order.
    pub fn nearest_to(&self, y: &Vector) -> Option<Vector> {
        select_nearest(self.points.points(), y)
    }

    /// The isolated solutions together with the projections of `y` onto
    /// every degenerate piece that keep their sign conditions.
    pub fn candidates_near(&self, y: &Vector, tol: f64) -> PointSet {
        let mut set = self.points.clone();
        for d in &self.degenerate_faces {
            if let Some(piece) = &d.piece {
                let q = piece.project(y);
                if piece.satisfies(&q, tol) {
                    set.insert(q);
                }
            }
        }
        set
    }

    fn translate(&mut self, d: &Vector) {
        self.points = PointSet::from_points(self.points.points().iter().map(|p| p + d));
        for f in &mut self.degenerate_faces {
            if let Some(piece) = &mut f.piece {
                piece.translate(d);
            }
        }
    }
}

/// Nearest point of `points` to `y`, with deterministic tie-breaking.
pub fn select_nearest(points: &[Vector], y: &Vector) -> Option<Vector> {
    let mut best: Option<(&Vector, f64)> = None;
    for p in points {
        let d = (p - y).norm();
        best = match best {
            None => Some((p, d)),
            Some((q, dq)) => {
                let slack = 1e-12 * (1.0 + dq);
                if d < dq - slack || (d <= dq + slack && prefer(p, q)) {
                    Some((p, d))
                } else {
                    Some((q, dq))
                }
            }
        };
    }
    best.map(|(p, _)| p.clone())
}

fn prefer(p: &Vector, q: &Vector) -> bool {
    let (np, nq) = (p.norm(), q.norm());
    if np != nq {
        return np < nq;
    }
    p.iter()
        .zip(q.iter())
        .find(|(a, b)| a != b)
        .is_some_and(|(a, b)| a < b)
}

fn sub_matrix(a: &Matrix, rows: &[usize], cols: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

fn qr_rank(m: &Matrix, scale: f64) -> usize {
    let k = m.ncols();
    if k == 0 {
        return 0;
    }
    let r = m.clone().col_piv_qr().unpack_r();
    let largest = (0..k).fold(0.0f64, |acc, i| acc.max(r[(i, i)].abs()));
    let threshold = RANK_TOL * largest.max(scale);
    if largest == 0.0 {
        return 0;
    }
    (0..k).filter(|&i| r[(i, i)].abs() > threshold).count()
}

/// Solutions `u` of `z ∈ A·u + N_C(base + u)`, face by face.
///
/// Rank-deficient faces are reported in `degenerate_faces`; when their
/// equations are consistent the whole affine piece is attached.
pub fn face_solve(
    a: &Matrix,
    cone: &ConeSpec,
    base: &Vector,
    z: &Vector,
    tol: f64,
) -> Result<InverseSolveResult> {
    let n = cone.dim();
    if a.nrows() != n || a.ncols() != n || base.len() != n || z.len() != n {
        return Err(Error::Dimension(format!(
            "face solve in R^{n}: A is {}x{}, base {}, z {}",
            a.nrows(),
            a.ncols(),
            base.len(),
            z.len()
        )));
    }
    // work in v = base + u, where the cone apex is at the origin
    let zp = z + a * base;
    let scale = a.amax();
    let mut out = InverseSolveResult {
        points: PointSet::new(),
        face_tags: Vec::new(),
        degenerate_faces: Vec::new(),
    };
    for face in cone.faces()? {
        let eq = face.equality_indices(n);
        let act = face.active();
        let sub = sub_matrix(a, &eq, &eq);
        let rhs = Vector::from_iterator(eq.len(), eq.iter().map(|&i| zp[i]));
        let rank = qr_rank(&sub, scale);
        if rank < eq.len() {
            let piece = degenerate_piece(a, cone, base, z, &face, &eq, sub, &rhs, tol);
            out.degenerate_faces.push(DegenerateFace { face, rank, piece });
            continue;
        }
        let mut v = Vector::zeros(n);
        if !eq.is_empty() {
            let sol = match sub.col_piv_qr().solve(&rhs) {
                Some(s) => s,
                None => continue,
            };
            for (k, &i) in eq.iter().enumerate() {
                v[i] = sol[k];
            }
        }
        let nonneg_ok = eq
            .iter()
            .all(|&i| cone.kind(i) == ConeKind::Free || v[i] >= -tol);
        if !nonneg_ok {
            continue;
        }
        let av = a * &v;
        if !act.iter().all(|&i| zp[i] - av[i] <= tol) {
            continue;
        }
        for &i in &eq {
            if cone.kind(i) == ConeKind::NonNeg && v[i] < 0.0 {
                v[i] = 0.0;
            }
        }
        let tag = Face::of_point(cone, &v, ACTIVITY_TOL);
        if out.points.insert(v - base) {
            out.face_tags.push(tag);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn degenerate_piece(
    a: &Matrix,
    cone: &ConeSpec,
    base: &Vector,
    z: &Vector,
    face: &Face,
    eq: &[usize],
    sub: Matrix,
    rhs: &Vector,
    tol: f64,
) -> Option<AffinePiece> {
    let n = cone.dim();
    let k = eq.len();
    let svd = SVD::new(sub.clone(), true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let rank = svd.rank(RANK_TOL * smax.max(a.amax()));
    let sol = if smax > 0.0 {
        svd.solve(rhs, RANK_TOL * smax).ok()?
    } else {
        Vector::zeros(k)
    };
    let consistency = (&sub * &sol - rhs).amax();
    if consistency > tol * (1.0 + rhs.amax()) {
        return None;
    }
    let v_t = svd.v_t?;
    let nullity = k - rank.min(k);
    let mut basis = Matrix::zeros(n, nullity);
    for c in 0..nullity {
        let row = v_t.row(k - nullity + c);
        for (j, &i) in eq.iter().enumerate() {
            basis[(i, c)] = row[j];
        }
    }
    let mut particular = Vector::zeros(n);
    for (j, &i) in eq.iter().enumerate() {
        particular[i] = sol[j];
    }
    let particular = particular - base;
    // sign conditions in u = v - base coordinates
    let mut rows: Vec<(Vector, f64)> = Vec::new();
    for &i in eq {
        if cone.kind(i) == ConeKind::NonNeg {
            let mut g = Vector::zeros(n);
            g[i] = -1.0;
            rows.push((g, base[i]));
        }
    }
    for &i in face.active() {
        let g = -a.row(i).transpose();
        rows.push((g, -z[i]));
    }
    let ineq_a = Matrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
    let ineq_b = Vector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    Some(AffinePiece {
        particular,
        basis,
        ineq_a,
        ineq_b,
    })
}

/// Max-norms of the `y`-derivatives of orders `1..=p` at the base point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyProfile {
    pub order: usize,
    pub norms: Vec<f64>,
    pub tol: f64,
    pub completely_degenerate: bool,
}

pub fn degeneracy_profile(problem: &ProblemSpec, tol: f64) -> Result<DegeneracyProfile> {
    degeneracy_profile_with(problem, tol, DerivativeMode::Auto)
}

/// Reports `‖f_y^{(k)}‖_max` for `k = 1..=p`. The verdict is true when every
/// order below `p` vanishes within `tol` and order `p` does not; if order `p`
/// vanishes too the order is wrong and [`Error::OrderTooLow`] is returned.
pub fn degeneracy_profile_with(
    problem: &ProblemSpec,
    tol: f64,
    mode: DerivativeMode,
) -> Result<DegeneracyProfile> {
    let p = problem.order();
    if p < 2 {
        return Err(Error::InvalidProblem(format!(
            "degeneracy profile needs p >= 2, got {p}"
        )));
    }
    let norms = (1..=p)
        .map(|k| problem.derivative_tensor(k, mode).map(|t| t.max_abs()))
        .collect::<Result<Vec<_>>>()?;
    let lower_vanish = norms[..p - 1].iter().all(|&v| v <= tol);
    let top = norms[p - 1] > tol;
    if lower_vanish && !top {
        return Err(Error::OrderTooLow { p });
    }
    Ok(DegeneracyProfile {
        order: p,
        norms,
        tol,
        completely_degenerate: lower_vanish && top,
    })
}

/// Uniform sample from the closed ball of the given radius around 0.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vector {
    if dim == 0 {
        return Vector::zeros(0);
    }
    loop {
        let g = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
            return g * (r / norm);
        }
    }
}

/// RNG for sample `index` of a run seeded with `seed`: one ChaCha stream per index.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Deterministic source of right-hand-side pairs.
pub trait PairSampler: Sync {
    fn pair(&self, index: usize) -> (Vector, Vector);
    fn seed(&self) -> u64;
}

/// Independent uniform draws from a ball.
#[derive(Debug, Clone)]
pub struct BallSampler {
    pub center: Vector,
    pub radius: f64,
    pub seed: u64,
}

impl BallSampler {
    pub fn new(center: Vector, radius: f64, seed: u64) -> Self {
        BallSampler {
            center,
            radius,
            seed,
        }
    }
}

impl PairSampler for BallSampler {
    fn pair(&self, index: usize) -> (Vector, Vector) {
        let mut rng = sample_rng(self.seed, index);
        let n = self.center.len();
        let a = &self.center + sample_ball(&mut rng, n, self.radius);
        let b = &self.center + sample_ball(&mut rng, n, self.radius);
        (a, b)
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    /// Largest observed `‖h‖^{p-1} H(L^{-1}(z1), L^{-1}(z2)) / ‖z1 - z2‖`.
    pub c_estimate: f64,
    pub median_ratio: f64,
    /// Pairs that produced a ratio.
    pub sample_count: usize,
    #[serde(serialize_with = "ser::vector_pair")]
    pub worst_pair: Option<(Vector, Vector)>,
    /// Pairs where one inverse was empty.
    pub empty_samples: usize,
    /// Pairs where a face subsystem was rank-deficient.
    pub degenerate_samples: usize,
    pub seed: u64,
    /// No sample showed an empty inverse or a degenerate face.
    pub regular: bool,
}

enum PairOutcome {
    Ratio(f64),
    Empty,
    Degenerate,
    Skipped,
}

/// Empirical constant of the strong p-regularity bound along `h`.
pub fn strong_regularity_estimate(
    op: &PFactorOperator,
    sampler: &dyn PairSampler,
    samples: usize,
    tol: f64,
) -> Result<RegularityReport> {
    if samples < 2 {
        return Err(Error::InsufficientSamples {
            got: samples,
            need: 2,
        });
    }
    let weight = op.h().norm().powi(op.order() as i32 - 1);
    let outcomes: Vec<PairOutcome> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<PairOutcome> {
            let (z1, z2) = sampler.pair(i);
            let dz = (&z1 - &z2).norm();
            if dz == 0.0 {
                return Ok(PairOutcome::Skipped);
            }
            let r1 = op.solve_faces(&z1, tol)?;
            let r2 = op.solve_faces(&z2, tol)?;
            if r1.is_empty() || r2.is_empty() {
                return Ok(PairOutcome::Empty);
            }
            if !r1.is_regular() || !r2.is_regular() {
                return Ok(PairOutcome::Degenerate);
            }
            Ok(PairOutcome::Ratio(weight * hausdorff(&r1.points, &r2.points)? / dz))
        })
        .collect::<Result<_>>()?;
    let mut ratios = Vec::new();
    let mut worst: Option<(usize, f64)> = None;
    let (mut empty, mut degenerate) = (0, 0);
    for (i, o) in outcomes.iter().enumerate() {
        match *o {
            PairOutcome::Ratio(r) => {
                ratios.push(r);
                if worst.is_none_or(|(_, w)| r > w) {
                    worst = Some((i, r));
                }
            }
            PairOutcome::Empty => empty += 1,
            PairOutcome::Degenerate => degenerate += 1,
            PairOutcome::Skipped => {}
        }
    }
    if ratios.is_empty() {
        return Err(Error::NotRegular(format!(
            "no usable sample: {empty} with an empty inverse, {degenerate} with degenerate faces"
        )));
    }
    ratios.sort_by(f64::total_cmp);
    let median = if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    Ok(RegularityReport {
        c_estimate: *ratios.last().unwrap_or(&0.0),
        median_ratio: median,
        sample_count: ratios.len(),
        worst_pair: worst.map(|(i, _)| sampler.pair(i)),
        empty_samples: empty,
        degenerate_samples: degenerate,
        seed: sampler.seed(),
        regular: empty == 0 && degenerate == 0,
    })
}

/// Empirical modulus `δ` of the p-factor approximation condition at `x`:
/// the largest observed
/// `‖f(x,y1) - f(x,y2) - (T[y1]^p - T[y2]^p)/p!‖ / ((‖y1‖^{p-1} + ‖y2‖^{p-1}) ‖y1 - y2‖)`
/// over pairs drawn uniformly from the ball of the given radius around `y0`.
pub fn approximation_delta(
    problem: &ProblemSpec,
    x: &Vector,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(radius > 0.0) || samples == 0 {
        return Err(Error::InvalidProblem(
            "approximation delta needs radius > 0 and at least one sample".into(),
        ));
    }
    let p = problem.order();
    let t = problem.derivative_tensor(p, DerivativeMode::Auto)?;
    let c = 1.0 / factorial(p);
    let n = problem.dim();
    let y0 = problem.y0();
    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = sample_rng(seed, i);
            let y1 = sample_ball(&mut rng, n, radius);
            let y2 = sample_ball(&mut rng, n, radius);
            let dy = (&y1 - &y2).norm();
            let denom = (y1.norm().powi(p as i32 - 1) + y2.norm().powi(p as i32 - 1)) * dy;
            if dy == 0.0 || denom == 0.0 {
                return Ok(0.0);
            }
            let f1 = problem.eval(x, &(y0 + &y1))?;
            let f2 = problem.eval(x, &(y0 + &y2))?;
            let num = f1 - f2 - (power_form(&t, &y1)? - power_form(&t, &y2)?) * c;
            Ok(num.norm() / denom)
        })
        .collect::<Result<_>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

const ROBINSON_SAMPLES: usize = 32;
const ROBINSON_RADIUS: f64 = 1e-2;

/// Whether the linearization `f(x0,y0) + f'_y(x0,y0)(y - y0) + N_C(y)` has a
/// single-valued inverse near 0: every sampled right-hand side (and 0
/// itself) must have exactly one solution and no rank-deficient face.
pub fn robinson_check(problem: &ProblemSpec, tol: f64) -> Result<bool> {
    let j = problem.derivative_tensor(1, DerivativeMode::Auto)?.to_matrix()?;
    let f0 = problem.eval(problem.x0(), problem.y0())?;
    let n = problem.dim();
    let offset = &j * problem.y0() - &f0;
    let zero = Vector::zeros(n);
    for i in 0..=ROBINSON_SAMPLES {
        let z = if i == 0 {
            Vector::zeros(n)
        } else {
            sample_ball(&mut sample_rng(0, i), n, ROBINSON_RADIUS)
        };
        let res = face_solve(&j, problem.cone(), &zero, &(z + &offset), tol)?;
        if res.points.len() != 1 || !res.is_regular() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn example1_op(h: &[f64]) -> PFactorOperator {
        let e = builtin("example1").unwrap();
        let t = e.derivative_tensor(2, DerivativeMode::Exact).unwrap();
        build_p_factor(&t, &v(h), e.cone(), 2).unwrap()
    }

    #[test]
    fn example1_matrices() {
        let op = example1_op(&[1.0, 1.0]);
        assert_eq!(op.a(), &Matrix::from_row_slice(2, 2, &[2.0, -2.0, 1.0, 1.0]));
        let op = example1_op(&[1.0, 0.0]);
        assert_eq!(op.a(), &Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        let doubled = example1_op(&[2.0, 2.0]);
        assert_eq!(doubled.a(), &(example1_op(&[1.0, 1.0]).a() * 2.0));
    }

    #[test]
    fn zero_direction_rejected() {
        let e = builtin("example1").unwrap();
        let t = e.derivative_tensor(2, DerivativeMode::Exact).unwrap();
        assert_eq!(
            build_p_factor(&t, &v(&[0.0, 0.0]), e.cone(), 2),
            Err(Error::DegenerateDirection)
        );
    }

    #[test]
    fn example1_inverse_at_zero_is_the_corner() {
        let op = example1_op(&[1.0, 1.0]);
        let r = op.invert(&v(&[0.0, 0.0]), 1e-10).unwrap();
        assert_eq!(r.points.points(), &[v(&[-1.0, -1.0])]);
        assert_eq!(r.face_tags, vec![Face::new(vec![0, 1])]);
        assert!(r.is_regular());
    }

    #[test]
    fn example1_inverse_interior() {
        let op = example1_op(&[1.0, 1.0]);
        let r = op.invert(&v(&[0.0, 2.0]), 1e-10).unwrap();
        // y = u - h with u = (1, 1)
        assert!(r.points.distance_to(&v(&[0.0, 0.0])).unwrap() < 1e-14);
        for p in r.points.points() {
            assert!(op.residual(p, &v(&[0.0, 2.0])) <= 1e-10);
        }
    }

    #[test]
    fn identity_on_free_cone() {
        let op = PFactorOperator::from_matrix(
            Matrix::identity(3, 3),
            v(&[1.0, 0.0, 0.0]),
            ConeSpec::free(3),
            2,
        )
        .unwrap();
        let r = op.invert(&v(&[3.0, -1.0, 2.0]), 1e-12).unwrap();
        assert_eq!(r.points.points(), &[v(&[2.0, -1.0, 2.0])]);
    }

    #[test]
    fn zero_operator_is_degenerate() {
        let op = PFactorOperator::from_matrix(
            Matrix::zeros(2, 2),
            v(&[1.0, 0.0]),
            ConeSpec::nonneg(2),
            2,
        )
        .unwrap();
        let r = op.solve_faces(&v(&[-1.0, -1.0]), 1e-12).unwrap();
        assert_eq!(r.degenerate_faces.len(), 3);
        let sampler = BallSampler::new(Vector::zeros(2), 0.1, 3);
        assert!(matches!(
            strong_regularity_estimate(&op, &sampler, 50, 1e-12),
            Err(Error::NotRegular(_))
        ));
    }

    #[test]
    fn degenerate_piece_contains_the_ray() {
        // A = [[0, 2], [1, 0]] on R^2_+, z = (1, 0): face {1} leaves u2 free with u2 >= 1/2
        let op = PFactorOperator::from_matrix(
            Matrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 0.0]),
            v(&[0.0, 1.0]),
            ConeSpec::nonneg(2),
            2,
        )
        .unwrap();
        let r = op.solve_faces(&v(&[1.0, 0.0]), 1e-12).unwrap();
        let d = r
            .degenerate_faces
            .iter()
            .find(|d| d.face == Face::new(vec![0]))
            .unwrap();
        let piece = d.piece.as_ref().unwrap();
        // y = u - h; u = (0, 1) means y = 0
        let q = piece.project(&v(&[0.3, 0.0]));
        assert!(q.norm() < 1e-14);
        assert!(piece.satisfies(&q, 1e-12));
        let low = piece.project(&v(&[0.0, -0.8]));
        assert!(!piece.satisfies(&low, 1e-12));
        let cands = r.candidates_near(&Vector::zeros(2), 1e-12);
        assert_eq!(r.nearest_to(&Vector::zeros(2)), Some(v(&[0.0, -0.5])));
        assert_eq!(select_nearest(cands.points(), &Vector::zeros(2)), Some(v(&[0.0, 0.0])));
    }

    #[test]
    fn nearest_tie_breaking() {
        let pts = [v(&[1.0, 0.0]), v(&[-1.0, 0.0]), v(&[0.0, 1.0])];
        assert_eq!(select_nearest(&pts, &Vector::zeros(2)), Some(v(&[-1.0, 0.0])));
        assert_eq!(select_nearest(&[], &Vector::zeros(2)), None);
    }

    #[test]
    fn degeneracy_profiles() {
        let e1 = builtin("example1").unwrap();
        let d = degeneracy_profile(&e1, 1e-12).unwrap();
        assert_eq!(d.norms[0], 0.0);
        assert!(d.norms[1] > 0.0);
        assert!(d.completely_degenerate);
        let e2 = builtin("example2").unwrap();
        let d = degeneracy_profile(&e2, 1e-12).unwrap();
        assert_eq!(&d.norms[..2], &[0.0, 0.0]);
        assert!(d.completely_degenerate);
        // third order on a quadratic problem vanishes
        let e1_3 = e1.with_order(3).unwrap();
        assert!(!degeneracy_profile(&e1_3, 1e-12).unwrap().completely_degenerate);
        let names = crate::problems::variable_names(0, 1);
        let lin = crate::problems::parse_expr("y1^3", &names, 0, 0).unwrap();
        let cube = ProblemSpec::polynomial(vec![lin], 0, ConeSpec::free(1), 2).unwrap();
        assert_eq!(
            degeneracy_profile(&cube, 1e-12),
            Err(Error::OrderTooLow { p: 2 })
        );
    }

    #[test]
    fn linear_problem_is_not_degenerate() {
        let names = crate::problems::variable_names(1, 1);
        let f = crate::problems::parse_expr("y1 - x1", &names, 0, 0).unwrap();
        let spec = ProblemSpec::polynomial(vec![f], 1, ConeSpec::free(1), 2).unwrap();
        let d = degeneracy_profile(&spec, 1e-12).unwrap();
        assert!(d.norms[0] > 0.0);
        assert!(!d.completely_degenerate);
        assert!(robinson_check(&spec, 1e-10).unwrap());
    }

    #[test]
    fn robinson_fails_on_the_examples() {
        for name in ["example1", "example2"] {
            assert!(!robinson_check(&builtin(name).unwrap(), 1e-10).unwrap(), "{name}");
        }
    }

    #[test]
    fn approximation_delta_vanishes_on_example1() {
        let e = builtin("example1").unwrap();
        for x in [v(&[0.0, 0.0]), v(&[0.3, -0.2])] {
            assert!(approximation_delta(&e, &x, 0.1, 200, 1).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn regularity_estimate_is_seed_deterministic() {
        let op = example1_op(&[1.0, 1.0]);
        let s = BallSampler::new(Vector::zeros(2), 0.1, 42);
        let a = strong_regularity_estimate(&op, &s, 100, 1e-12).unwrap();
        let b = strong_regularity_estimate(&op, &s, 100, 1e-12).unwrap();
        assert_eq!(a, b);
        assert!(a.c_estimate >= a.median_ratio && a.median_ratio >= 0.0);
    }
}
