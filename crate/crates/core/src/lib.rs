//! Solver and certification toolkit for singular generalized equations
//! `0 ∈ f(x, y) + N_C(y)` over orthant-product cones.
//!
//! When the derivatives of `f` in `y` vanish up to order `p - 1` at the base
//! point, the ordinary implicit function theorem gives nothing. This crate
//! builds the branch `φ(x)` from the order-`p` derivative instead: a direction
//! `h` from the Banach condition, then a set-valued contraction on the
//! p-factor operator. The same machinery certifies tangent directions to the
//! solution set.
//!
//! ```
//! use singular_ge::{builtin, solve_implicit, SolveOptions, Vector};
//!
//! let problem = builtin("example1").unwrap();
//! let x = Vector::from_row_slice(&[0.0, 2.0]);
//! let sol = solve_implicit(&problem, &x, &SolveOptions::default()).unwrap();
//! assert!((sol.phi[0] - 2f64.sqrt()).abs() < 1e-9);
//! ```

// `!(a <= b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cones;
pub mod error;
pub mod multilinear;
pub mod pfactor;
pub mod problems;
pub mod ser;
pub mod solver;
pub mod tangent;

pub use cones::{ConeKind, ConeSpec, Face, NormalComponent, NormalConeRep};
pub use error::{Error, Result};
pub use multilinear::{
    apply_form, contract, fd_derivative_tensor, hausdorff, power_form, Matrix, PointSet,
    SymTensor, Vector,
};
pub use pfactor::{
    approximation_delta, build_p_factor, degeneracy_profile, degeneracy_profile_with,
    face_solve, robinson_check, strong_regularity_estimate, BallSampler, DegeneracyProfile,
    InverseSolveResult, PFactorOperator, PairSampler, RegularityReport,
};
pub use problems::{
    builtin, from_kkt, from_ncp, parse_nlp, parse_problem, write_problem, DerivativeMode,
    Mapping, NlpSpec, Polynomial, ProblemSpec,
};
pub use solver::{
    cmp_iterate, residual_map, scaling_study, solve_banach, solve_implicit, Anchor,
    BanachSolution, ImplicitSolution, ScalingReport, SingularModel, SolveOptions,
};
pub use tangent::{
    certify_tangent, default_t_grid, kernel_check, TangentCertificate, TangentOptions,
};
