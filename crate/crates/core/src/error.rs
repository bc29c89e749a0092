use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("field does not live on this grid (expected {expected} nodes, got {actual})")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },

    #[error("coefficient A({s}, {t}) = {value} is below its declared lower bound {bound}")]
    CoefficientBelowBound {
        s: f64,
        t: f64,
        value: f64,
        bound: f64,
    },

    #[error("unsupported alpha {0}: only alpha >= 0 is supported")]
    UnsupportedAlpha(f64),

    #[error("invalid M = {0}: must be >= 1")]
    InvalidM(f64),

    #[error("invalid order interval: {0}")]
    InvalidInterval(String),

    #[error("infeasible forcing term: {0}")]
    InfeasibleForcing(String),

    #[error("parameter {name} = {value} outside admissible range {range}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        range: String,
    },

    #[error("structural conditions failed: {0}")]
    ConditionsFailed(String),

    #[error("singular Jacobian at Newton iteration {0}")]
    SingularJacobian(usize),

    #[error("grid too large for dense oracle: {0}")]
    GridTooLarge(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
}
