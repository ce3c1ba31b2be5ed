use thiserror::Error;

/// Errors raised by the toric model and everything built on top of it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("polytope is unbounded: {0}")]
    UnboundedPolytope(String),
    #[error("polytope is not Delzant: {0}")]
    NotDelzant(String),
    #[error("degenerate polytope: {0}")]
    DegeneratePolytope(String),
    #[error("unsupported dimension {0} (only n = 1 and n = 2 are implemented)")]
    UnsupportedDimension(usize),
    #[error("potentials live on different grids or polytopes")]
    GridMismatch,
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("input is not convex: {0}")]
    NonConvexInput(String),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("degenerate Hessian: {0}")]
    DegenerateHessian(String),
    #[error("model is not Fano (all facet offsets must equal {expected}): {detail}")]
    NotFano { expected: f64, detail: String },
    #[error("edge cone angle beta < 1 is only supported for n = 1")]
    EdgeDimensionUnsupported,
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("route disagreement: {0}")]
    RouteDisagreement(String),
    #[error("timestamps must be strictly increasing")]
    UnsortedTimestamps,
    #[error("insufficient spread: {0}")]
    InsufficientSpread(String),
    #[error("model lacks capability: {0}")]
    MissingCapability(String),
    #[error("precondition not met: {0}")]
    PreconditionNotMet(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}
