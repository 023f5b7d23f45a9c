use thiserror::Error;

/// Broad category of a failure, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Inputs outside the region where a formula or estimate is defined.
    Domain,
    /// A computation inside the domain failed to converge or overflowed.
    Numerical,
    /// Malformed request (bad argument, wrong basis, unknown name).
    Usage,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("q = {q} is outside the validated window 1 < q < {limit}")]
    OutsideWindow { q: f64, limit: f64 },

    #[error("bound formulas need q > 1 (got q = {q}); the undeformed limit is divergent")]
    Undeformed { q: f64 },

    #[error(
        "convergence radius for level {n} is non-positive at q = {q}: [2]q^(-2n) - 1 = {numerator}"
    )]
    NonPositiveRadius { n: usize, q: f64, numerator: f64 },

    #[error("|gamma| = {gamma} is at or beyond {fraction} of the certified radius {radius}")]
    CouplingOutsideRadius {
        gamma: f64,
        radius: f64,
        fraction: f64,
    },

    #[error("|delta E| = {delta_e} left the certified domain |delta E| < omega/5 = {limit}")]
    EnergyShiftOutOfDomain { delta_e: f64, limit: f64 },

    #[error("fixed-point map is not a contraction: {0}")]
    NonContraction(String),

    #[error("series term of order {order} is not finite")]
    Overflow { order: usize },

    #[error("expected a {expected} basis vector")]
    WrongBasis { expected: &'static str },

    #[error("momentum cutoff {cutoff} too small: edge coefficient ratio {edge_ratio:e} exceeds {limit:e}")]
    CutoffTooSmall {
        cutoff: usize,
        edge_ratio: f64,
        limit: f64,
    },

    #[error("truncation N = {levels} too small, need at least {required}")]
    TruncationTooSmall { levels: usize, required: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteMatrix { row: usize, col: usize },

    #[error("eigensolver residual {residual:e} exceeds {limit:e} for eigenpair {index}")]
    EigenResidual {
        index: usize,
        residual: f64,
        limit: f64,
    },

    #[error("truncation scan reached N = {levels} without eigenvalue {target} stabilizing (last change {change:e})")]
    NoStability {
        target: usize,
        levels: usize,
        change: f64,
    },

    #[error("nearest oracle eigenvalue to {energy} is ambiguous (distances {nearest:e} and {second:e})")]
    AmbiguousMatch {
        energy: f64,
        nearest: f64,
        second: f64,
    },

    #[error("parameter snapshots differ between perturbative and oracle results")]
    ParameterMismatch,

    #[error("unknown eigensolver `{name}` (available: {available})")]
    UnknownSolver { name: String, available: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            OutsideWindow { .. }
            | Undeformed { .. }
            | NonPositiveRadius { .. }
            | CouplingOutsideRadius { .. }
            | EnergyShiftOutOfDomain { .. }
            | InvalidParameter(_) => ErrorClass::Domain,
            NonContraction(_)
            | Overflow { .. }
            | CutoffTooSmall { .. }
            | NonFiniteMatrix { .. }
            | EigenResidual { .. }
            | NoStability { .. }
            | AmbiguousMatch { .. } => ErrorClass::Numerical,
            WrongBasis { .. }
            | TruncationTooSmall { .. }
            | ParameterMismatch
            | UnknownSolver { .. } => ErrorClass::Usage,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
