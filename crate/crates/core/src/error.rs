use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants fall into three groups: input problems (dimensions, parsing,
/// invalid base points), hypothesis failures of the singular implicit
/// function construction (Banach condition, regularity, kernel membership),
/// and numerical failures of the iterations themselves.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("evaluator failed: {0}")]
    Eval(String),

    #[error("empty point set")]
    EmptySet,

    #[error("{count} nonnegative coordinates exceed the face enumeration limit of {limit}")]
    EnumerationLimit { count: usize, limit: usize },

    #[error("direction h must be nonzero")]
    DegenerateDirection,

    #[error("set-valued inverse is empty ({degenerate_faces} rank-deficient faces)")]
    NotInvertible { degenerate_faces: usize },

    #[error("derivative of order {p} vanishes as well; the degeneracy order is higher than {p}")]
    OrderTooLow { p: usize },

    #[error("strong p-regularity fails: {0}")]
    NotRegular(String),

    #[error("Banach condition has no solution at this parameter")]
    BanachConditionFails,

    #[error("fixed-point map is not contracting (observed factor {theta})")]
    NoContraction { theta: f64 },

    #[error("no convergence after {iterations} iterations: {detail}")]
    NonConvergence { iterations: usize, detail: String },

    #[error("insufficient samples: {got} usable, {need} required")]
    InsufficientSamples { got: usize, need: usize },

    #[error("direction is not in the p-kernel")]
    NotInKernel,

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("base point violates the inclusion (residual {residual})")]
    InvalidBasePoint { residual: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("unknown builtin problem `{0}`")]
    UnknownBuiltin(String),
}

impl Error {
    /// True for failures of a hypothesis of the construction, as opposed to
    /// bad input or numerical breakdown.
    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(
            self,
            Error::BanachConditionFails
                | Error::NotRegular(_)
                | Error::NotInvertible { .. }
                | Error::NoContraction { .. }
                | Error::NotInKernel
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
