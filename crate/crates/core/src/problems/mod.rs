//! Parametric generalized equations `0 ∈ f(x, y) + N_C(y)`.
//!
//! A [`ProblemSpec`] bundles the mapping `f`, the cone `C`, a base solution
//! `(x0, y0)` and the degeneracy order `p`. Polynomial mappings get exact
//! derivative tensors; opaque callbacks fall back to finite differences.

mod file;
mod polynomial;

use std::fmt;
use std::sync::Arc;

use crate::cones::ConeSpec;
use crate::error::{Error, Result};
use crate::multilinear::{default_fd_step, fd_derivative_tensor, SymTensor, Vector};

pub use file::{parse_ncp_components, parse_nlp, parse_problem, write_problem};
pub use polynomial::{parse_expr, Polynomial};

/// Largest base-point inclusion residual accepted on construction.
pub const BASE_POINT_TOL: f64 = 1e-9;

pub type OpaqueFn = dyn Fn(&Vector, &Vector) -> Result<Vector> + Send + Sync;

#[derive(Clone)]
pub enum Mapping {
    /// One polynomial per output over the variables `x1..xm, y1..yn`.
    Polynomial(Vec<Polynomial>),
    Opaque(Arc<OpaqueFn>),
}

impl fmt::Debug for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mapping::Polynomial(p) => f.debug_tuple("Polynomial").field(p).finish(),
            Mapping::Opaque(_) => f.write_str("Opaque(..)"),
        }
    }
}

impl PartialEq for Mapping {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Mapping::Polynomial(a), Mapping::Polynomial(b)) => a == b,
            (Mapping::Opaque(a), Mapping::Opaque(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// How derivative tensors are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMode {
    /// Exact for polynomial mappings, finite differences otherwise.
    #[default]
    Auto,
    Exact,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    m: usize,
    n: usize,
    mapping: Mapping,
    cone: ConeSpec,
    x0: Vector,
    y0: Vector,
    p: usize,
}

impl ProblemSpec {
    /// Validates dimensions, `p >= 1`, and that the base point solves the inclusion.
    pub fn new(
        mapping: Mapping,
        cone: ConeSpec,
        x0: Vector,
        y0: Vector,
        p: usize,
    ) -> Result<Self> {
        let (m, n) = (x0.len(), y0.len());
        if cone.dim() != n {
            return Err(Error::InvalidProblem(format!(
                "cone has {} coordinates but there are {n} unknowns",
                cone.dim()
            )));
        }
        if p == 0 {
            return Err(Error::InvalidProblem("order p must be positive".into()));
        }
        if let Mapping::Polynomial(polys) = &mapping {
            if polys.len() != n {
                return Err(Error::InvalidProblem(format!(
                    "{} components for {n} unknowns",
                    polys.len()
                )));
            }
            if let Some(bad) = polys.iter().find(|q| q.nvars() != m + n) {
                return Err(Error::InvalidProblem(format!(
                    "component over {} variables, expected {}",
                    bad.nvars(),
                    m + n
                )));
            }
        }
        if x0.iter().chain(y0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite base point".into()));
        }
        let spec = ProblemSpec {
            m,
            n,
            mapping,
            cone,
            x0,
            y0,
            p,
        };
        let f0 = spec.eval(&spec.x0, &spec.y0)?;
        if f0.len() != n {
            return Err(Error::InvalidProblem(format!(
                "mapping returns {} components for {n} unknowns",
                f0.len()
            )));
        }
        let residual = spec.cone.inclusion_residual(&spec.y0, &f0);
        if !(residual <= BASE_POINT_TOL) {
            return Err(Error::InvalidBasePoint { residual });
        }
        Ok(spec)
    }

    /// Polynomial problem with the base point at the origin.
    pub fn polynomial(polys: Vec<Polynomial>, m: usize, cone: ConeSpec, p: usize) -> Result<Self> {
        let n = cone.dim();
        ProblemSpec::new(
            Mapping::Polynomial(polys),
            cone,
            Vector::zeros(m),
            Vector::zeros(n),
            p,
        )
    }

    pub fn param_dim(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mapping(&self) -> &Mapping {
        &self.mapping
    }

    pub fn polynomials(&self) -> Option<&[Polynomial]> {
        match &self.mapping {
            Mapping::Polynomial(p) => Some(p),
            Mapping::Opaque(_) => None,
        }
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    pub fn x0(&self) -> &Vector {
        &self.x0
    }

    pub fn y0(&self) -> &Vector {
        &self.y0
    }

    pub fn order(&self) -> usize {
        self.p
    }

    /// Same problem with a different degeneracy order.
    pub fn with_order(&self, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidProblem("order p must be positive".into()));
        }
        Ok(ProblemSpec { p, ..self.clone() })
    }

    pub fn eval(&self, x: &Vector, y: &Vector) -> Result<Vector> {
        if x.len() != self.m || y.len() != self.n {
            return Err(Error::Dimension(format!(
                "expected x in R^{} and y in R^{}, got {} and {}",
                self.m,
                self.n,
                x.len(),
                y.len()
            )));
        }
        match &self.mapping {
            Mapping::Polynomial(polys) => {
                let vars: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
                Ok(Vector::from_iterator(
                    self.n,
                    polys.iter().map(|q| q.eval(&vars)),
                ))
            }
            Mapping::Opaque(f) => {
                let v = f(x, y)?;
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Eval("non-finite value".into()));
                }
                Ok(v)
            }
        }
    }

    /// `f(x, y) + N_C(y)` residual: distance from `-f(x, y)` to `N_C(y)`.
    pub fn inclusion_residual(&self, x: &Vector, y: &Vector) -> Result<f64> {
        Ok(self.cone.inclusion_residual(y, &self.eval(x, y)?))
    }

    /// The order-`k` derivative of `f` with respect to `y` at `(x, y)`.
    pub fn derivative_tensor_at(
        &self,
        x: &Vector,
        y: &Vector,
        k: usize,
        mode: DerivativeMode,
    ) -> Result<SymTensor> {
        match (&self.mapping, mode) {
            (Mapping::Polynomial(polys), DerivativeMode::Auto | DerivativeMode::Exact) => {
                poly_derivative_tensor(polys, x, y, k)
            }
            (Mapping::Opaque(_), DerivativeMode::Exact) => Err(Error::InvalidProblem(
                "exact derivatives need a polynomial mapping".into(),
            )),
            _ => {
                let step = default_fd_step(k, y);
                fd_derivative_tensor(|v: &Vector| self.eval(x, v), y, k, step)
            }
        }
    }

    /// The order-`k` derivative with respect to `y` at the base point.
    pub fn derivative_tensor(&self, k: usize, mode: DerivativeMode) -> Result<SymTensor> {
        self.derivative_tensor_at(&self.x0, &self.y0, k, mode)
    }

    /// Variable names in polynomial order: `x1..xm, y1..yn`.
    pub fn variable_names(&self) -> Vec<String> {
        variable_names(self.m, self.n)
    }
}

pub fn variable_names(m: usize, n: usize) -> Vec<String> {
    (1..=m)
        .map(|i| format!("x{i}"))
        .chain((1..=n).map(|i| format!("y{i}")))
        .collect()
}

/// Exact `k`-th derivative of polynomial components with respect to the
/// `y` variables (the last `y.len()` variables), evaluated at `(x, y)`.
pub fn poly_derivative_tensor(
    polys: &[Polynomial],
    x: &Vector,
    y: &Vector,
    k: usize,
) -> Result<SymTensor> {
    if k == 0 {
        return Err(Error::Dimension("derivative order must be positive".into()));
    }
    let (m, n) = (x.len(), y.len());
    if let Some(bad) = polys.iter().find(|q| q.nvars() != m + n) {
        return Err(Error::Dimension(format!(
            "polynomial over {} variables, point has {}",
            bad.nvars(),
            m + n
        )));
    }
    let vars: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
    let block = n.pow(k as u32);
    let mut coeffs = vec![0.0; polys.len() * block];
    let mut idx = vec![0usize; k];
    for (o, q) in polys.iter().enumerate() {
        for flat in 0..block {
            let mut rem = flat;
            for slot in idx.iter_mut().rev() {
                *slot = rem % n;
                rem /= n;
            }
            if idx.windows(2).any(|w| w[0] > w[1]) {
                continue;
            }
            let d = idx
                .iter()
                .fold(q.clone(), |acc, &i| acc.derivative(m + i));
            coeffs[o * block + flat] = d.eval(&vars);
        }
    }
    // fill permutations of each sorted multi-index
    for o in 0..polys.len() {
        for flat in 0..block {
            let mut rem = flat;
            for slot in idx.iter_mut().rev() {
                *slot = rem % n;
                rem /= n;
            }
            idx.sort_unstable();
            let canon = idx.iter().fold(0, |acc, &i| acc * n + i);
            coeffs[o * block + flat] = coeffs[o * block + canon];
        }
    }
    SymTensor::new(k, polys.len(), n, coeffs)
}

/// Smallest `k` in `1..=max_order` with a nonvanishing `y`-derivative at the base point.
pub fn infer_order(spec: &ProblemSpec, max_order: usize, tol: f64) -> Option<usize> {
    (1..=max_order).find(|&k| {
        spec.derivative_tensor(k, DerivativeMode::Auto)
            .map(|t| t.max_abs() > tol)
            .unwrap_or(false)
    })
}

const INFER_MAX_ORDER: usize = 4;
const INFER_TOL: f64 = 1e-12;

/// Nonlinear complementarity problem `y >= 0, f(x,y) >= 0, <f, y> = 0` as
/// `0 ∈ f(x, y) + N_{R^n_+}(y)` with the base point at the origin.
///
/// When `p` is `None` it is inferred as the first order with a nonzero
/// `y`-derivative.
pub fn from_ncp(polys: Vec<Polynomial>, m: usize, p: Option<usize>) -> Result<ProblemSpec> {
    let n = polys.len();
    let spec = ProblemSpec::polynomial(polys, m, ConeSpec::nonneg(n), p.unwrap_or(1))?;
    finish_order(spec, p)
}

fn finish_order(spec: ProblemSpec, p: Option<usize>) -> Result<ProblemSpec> {
    match p {
        Some(_) => Ok(spec),
        None => {
            let k = infer_order(&spec, INFER_MAX_ORDER, INFER_TOL).ok_or_else(|| {
                Error::InvalidProblem(format!(
                    "all y-derivatives up to order {INFER_MAX_ORDER} vanish"
                ))
            })?;
            spec.with_order(k)
        }
    }
}

/// `min ξ(x, y)` subject to `g(x, y) <= 0`, over `m` parameters and `n` unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct NlpSpec {
    pub m: usize,
    pub n: usize,
    pub objective: Polynomial,
    pub constraints: Vec<Polynomial>,
    /// Primal base point; multipliers start at zero.
    pub y0: Option<Vector>,
    pub x0: Option<Vector>,
    pub p: Option<usize>,
}

/// KKT system of an [`NlpSpec`] as a generalized equation in `(y, λ)`:
/// `0 ∈ (L'_y(y, λ), -g(y)) + N_{R^n × R^m_+}(y, λ)` with
/// `L(y, λ) = ξ(y) + <λ, g(y)>`.
pub fn from_kkt(nlp: &NlpSpec) -> Result<ProblemSpec> {
    let (m, n, k) = (nlp.m, nlp.n, nlp.constraints.len());
    let old = m + n;
    let new = m + n + k;
    for q in std::iter::once(&nlp.objective).chain(&nlp.constraints) {
        if q.nvars() != old {
            return Err(Error::InvalidProblem(format!(
                "NLP polynomial over {} variables, expected {old}",
                q.nvars()
            )));
        }
    }
    let map: Vec<usize> = (0..old).collect();
    let objective = nlp.objective.embed(new, &map);
    let constraints: Vec<Polynomial> = nlp.constraints.iter().map(|g| g.embed(new, &map)).collect();
    let mut rows = Vec::with_capacity(n + k);
    for j in 0..n {
        let var = m + j;
        let mut row = objective.derivative(var);
        for (i, g) in constraints.iter().enumerate() {
            let lambda = Polynomial::variable(new, old + i);
            row = row.add(&lambda.mul(&g.derivative(var)));
        }
        rows.push(row);
    }
    rows.extend(constraints.iter().map(|g| g.scale(-1.0)));
    let mut kinds = vec![crate::cones::ConeKind::Free; n];
    kinds.extend(std::iter::repeat_n(crate::cones::ConeKind::NonNeg, k));
    let x0 = nlp.x0.clone().unwrap_or_else(|| Vector::zeros(m));
    let mut y0 = Vector::zeros(n + k);
    if let Some(p) = &nlp.y0 {
        if p.len() != n {
            return Err(Error::InvalidProblem("primal base point dimension".into()));
        }
        y0.rows_mut(0, n).copy_from(p);
    }
    let spec = ProblemSpec::new(
        Mapping::Polynomial(rows),
        ConeSpec::new(kinds),
        x0,
        y0,
        nlp.p.unwrap_or(1),
    )?;
    finish_order(spec, nlp.p)
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 3] = ["example1", "example2", "example3"];

fn mono(nvars: usize, pairs: &[(usize, u32)]) -> Vec<u32> {
    let mut e = vec![0; nvars];
    for &(i, k) in pairs {
        e[i] = k;
    }
    e
}

/// The three reference problems.
///
/// * `example1`: the planar complementarity problem
///   `f = (y1² − y2² − x1, y1·y2 − x2)` over `R²_+`, `p = 2`.
/// * `example2`: the degenerate KKT system in `(y1, y2, λ1, λ2)` with one
///   parameter, cone `R² × R²_+`, `p = 3`.
/// * `example3`: `f = (y2² − y1², y1·y2)` over `R²_+` with no parameter, `p = 2`.
pub fn builtin(name: &str) -> Result<ProblemSpec> {
    match name {
        "example1" => {
            // variables: x1 x2 y1 y2
            let nv = 4;
            let f1 = Polynomial::from_terms(
                nv,
                [
                    (1.0, mono(nv, &[(2, 2)])),
                    (-1.0, mono(nv, &[(3, 2)])),
                    (-1.0, mono(nv, &[(0, 1)])),
                ],
            );
            let f2 = Polynomial::from_terms(
                nv,
                [(1.0, mono(nv, &[(2, 1), (3, 1)])), (-1.0, mono(nv, &[(1, 1)]))],
            );
            ProblemSpec::polynomial(vec![f1, f2], 2, ConeSpec::nonneg(2), 2)
        }
        "example2" => {
            // variables: x1 y1 y2 y3(=λ1) y4(=λ2)
            let nv = 5;
            let f1 = Polynomial::from_terms(
                nv,
                [
                    (4.0, mono(nv, &[(1, 3)])),
                    (-1.0, mono(nv, &[(0, 1)])),
                    (3.0, mono(nv, &[(3, 1), (1, 2)])),
                    (3.0, mono(nv, &[(4, 1), (1, 2)])),
                ],
            );
            let f2 = Polynomial::from_terms(
                nv,
                [
                    (-4.0, mono(nv, &[(2, 3)])),
                    (-6.0, mono(nv, &[(3, 1), (2, 2)])),
                    (6.0, mono(nv, &[(4, 1), (2, 2)])),
                ],
            );
            let f3 = Polynomial::from_terms(
                nv,
                [(1.0, mono(nv, &[(1, 3)])), (-2.0, mono(nv, &[(2, 3)]))],
            );
            let f4 = Polynomial::from_terms(
                nv,
                [(1.0, mono(nv, &[(1, 3)])), (2.0, mono(nv, &[(2, 3)]))],
            );
            ProblemSpec::polynomial(vec![f1, f2, f3, f4], 1, "FFPP".parse()?, 3)
        }
        "example3" => {
            // variables: y1 y2
            let nv = 2;
            let f1 = Polynomial::from_terms(
                nv,
                [(1.0, mono(nv, &[(1, 2)])), (-1.0, mono(nv, &[(0, 2)]))],
            );
            let f2 = Polynomial::from_terms(nv, [(1.0, mono(nv, &[(0, 1), (1, 1)]))]);
            ProblemSpec::polynomial(vec![f1, f2], 0, ConeSpec::nonneg(2), 2)
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

/// The nonlinear program whose KKT system motivates `example2`:
/// `min y1⁴ − y2⁴ − x·y1` subject to `y1³ − 2y2³ <= 0`, `y1³ + 2y2³ <= 0`.
pub fn example2_nlp() -> NlpSpec {
    let names = variable_names(1, 2);
    let parse = |s: &str| parse_expr(s, &names, 0, 0).expect("fixture expression");
    NlpSpec {
        m: 1,
        n: 2,
        objective: parse("y1^4 - y2^4 - x1*y1"),
        constraints: vec![parse("y1^3 - 2*y2^3"), parse("y1^3 + 2*y2^3")],
        y0: None,
        x0: None,
        p: Some(3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn example1_values() {
        let e = builtin("example1").unwrap();
        let f = e.eval(&v(&[0.0, 2.0]), &v(&[1.0, 1.0])).unwrap();
        assert_eq!(f.as_slice(), &[0.0, -1.0]);
    }

    #[test]
    fn example3_on_the_ray() {
        let e = builtin("example3").unwrap();
        for t in [1e-3, 0.5, 2.0] {
            let f = e.eval(&Vector::zeros(0), &v(&[0.0, t])).unwrap();
            assert_eq!(f.as_slice(), &[t * t, 0.0]);
        }
    }

    #[test]
    fn unknown_builtin() {
        assert_eq!(
            builtin("example9"),
            Err(Error::UnknownBuiltin("example9".into()))
        );
    }

    #[test]
    fn example1_derivatives() {
        let e = builtin("example1").unwrap();
        let j = e.derivative_tensor(1, DerivativeMode::Exact).unwrap();
        assert_eq!(j.max_abs(), 0.0);
        let h = e.derivative_tensor(2, DerivativeMode::Exact).unwrap();
        assert_eq!(h.coeffs(), &[2.0, 0.0, 0.0, -2.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn example2_derivatives() {
        let e = builtin("example2").unwrap();
        for k in 1..=2 {
            assert_eq!(e.derivative_tensor(k, DerivativeMode::Exact).unwrap().max_abs(), 0.0);
        }
        let t = e.derivative_tensor(3, DerivativeMode::Exact).unwrap();
        // 4 y1^3 -> 24 in the (y1,y1,y1) slot of the first output
        assert_eq!(t.get(0, &[0, 0, 0]), 24.0);
        assert_eq!(t.get(3, &[1, 1, 1]), 12.0);
        // -6 λ1 y2^2 -> -12 in the (y2,y2,λ1) slot of the second output
        assert_eq!(t.get(1, &[1, 1, 2]), -12.0);
    }

    #[test]
    fn invalid_base_point() {
        let nv = 2;
        let f = Polynomial::from_terms(nv, [(1.0, vec![0, 1]), (1.0, vec![0, 0])]);
        let r = ProblemSpec::polynomial(vec![f], 1, ConeSpec::free(1), 2);
        assert!(matches!(r, Err(Error::InvalidBasePoint { .. })));
    }

    #[test]
    fn ncp_reduction_of_example1() {
        let e = builtin("example1").unwrap();
        let polys = e.polynomials().unwrap().to_vec();
        assert_eq!(from_ncp(polys, 2, None).unwrap(), e);
    }

    #[test]
    fn kkt_reduction_matches_example2_up_to_the_constraint_sign() {
        let reduced = from_kkt(&example2_nlp()).unwrap();
        let e2 = builtin("example2").unwrap();
        assert_eq!(reduced.cone(), e2.cone());
        assert_eq!(reduced.order(), 3);
        let a = reduced.polynomials().unwrap();
        let b = e2.polynomials().unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
        assert_eq!(a[2], b[2].scale(-1.0));
        assert_eq!(a[3], b[3].scale(-1.0));
    }

    #[test]
    fn unconstrained_kkt_is_the_gradient() {
        let names = variable_names(0, 2);
        let nlp = NlpSpec {
            m: 0,
            n: 2,
            objective: parse_expr("y1^2 + y1*y2 + y2^2", &names, 0, 0).unwrap(),
            constraints: vec![],
            y0: None,
            x0: None,
            p: None,
        };
        let spec = from_kkt(&nlp).unwrap();
        assert_eq!(spec.cone(), &ConeSpec::free(2));
        assert_eq!(spec.order(), 1);
        let g = spec.polynomials().unwrap();
        assert_eq!(g[0], parse_expr("2*y1 + y2", &names, 0, 0).unwrap());
    }

    #[test]
    fn fd_and_exact_agree_on_builtins() {
        for name in BUILTIN_NAMES {
            let e = builtin(name).unwrap();
            for k in 1..=3 {
                let exact = e.derivative_tensor(k, DerivativeMode::Exact).unwrap();
                let fd = e.derivative_tensor(k, DerivativeMode::FiniteDifference).unwrap();
                let scale = exact.max_abs().max(1.0);
                for (a, b) in exact.coeffs().iter().zip(fd.coeffs()) {
                    assert!((a - b).abs() <= 1e-4 * scale, "{name} k={k}: {a} vs {b}");
                }
            }
        }
    }
}
