use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // graph construction
    #[error("edge ({u}, {v}) appears more than once")]
    DuplicateEdge { u: usize, v: usize },
    #[error("self loop at vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({u}, {v}) has non-positive weight {weight}")]
    NonPositiveWeight { u: usize, v: usize, weight: f64 },
    #[error("vertex {vertex} out of range for graph with {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("topology size must be at least 1")]
    SizeZero,
    #[error("invalid weight range [{lo}, {hi}]")]
    BadRange { lo: f64, hi: f64 },

    // spectral
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("bandwidth K={k} out of range for n={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("no invertible K-subset among the candidates")]
    NoInvertibleSubset,
    #[error("search space of {0} points exceeds the configured limit")]
    SearchSpaceTooLarge(f64),

    // signals and partitions
    #[error("spectral bounds are empty")]
    EmptyBounds,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("time {0} lies outside the sampled window")]
    OutOfWindow(f64),
    #[error("vertex {0} has no center within the partition radius")]
    Uncoverable(usize),
    #[error("exact complexity requested for {0} vertices (limit 20)")]
    TooLargeForExact(usize),

    // recovery
    #[error("no folding-number candidate fits the observations (best residual {best:e})")]
    NoCandidate { best: f64 },
    #[error("ambiguous recovery: residuals {best:e} and {second:e} are indistinguishable")]
    AmbiguousRecovery { best: f64, second: f64 },
    #[error("sampling submatrix W_S is singular")]
    SingularWS,
    #[error("boundary folding numbers at vertex {vertex}, step {step} are not zero")]
    BoundaryViolated { vertex: usize, step: i64 },
    #[error("majority vote needs at least one candidate")]
    EmptyCandidates,
    #[error("bad epsilon bracket [{lo}, {hi}]")]
    BadBracket { lo: f64, hi: f64 },

    // solver
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("solver diverged: {0}")]
    SolverDiverged(String),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("no integer point in the box satisfies the system")]
    NoFeasiblePoint,

    // io and configuration
    #[error("malformed netpbm header: {0}")]
    MalformedHeader(String),
    #[error("netpbm pixel data truncated")]
    TruncatedData,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateEdge { .. } => "DuplicateEdge",
            Error::SelfLoop(_) => "SelfLoop",
            Error::NonPositiveWeight { .. } => "NonPositiveWeight",
            Error::VertexOutOfRange { .. } => "VertexOutOfRange",
            Error::SizeZero => "SizeZero",
            Error::BadRange { .. } => "BadRange",
            Error::NotSymmetric(_) => "NotSymmetric",
            Error::KOutOfRange { .. } => "KOutOfRange",
            Error::NoInvertibleSubset => "NoInvertibleSubset",
            Error::SearchSpaceTooLarge(_) => "SearchSpaceTooLarge",
            Error::EmptyBounds => "EmptyBounds",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::OutOfWindow(_) => "OutOfWindow",
            Error::Uncoverable(_) => "Uncoverable",
            Error::TooLargeForExact(_) => "TooLargeForExact",
            Error::NoCandidate { .. } => "NoCandidate",
            Error::AmbiguousRecovery { .. } => "AmbiguousRecovery",
            Error::SingularWS => "SingularWS",
            Error::BoundaryViolated { .. } => "BoundaryViolated",
            Error::EmptyCandidates => "EmptyCandidates",
            Error::BadBracket { .. } => "BadBracket",
            Error::Infeasible => "Infeasible",
            Error::SolverDiverged(_) => "SolverDiverged",
            Error::IterationLimit(_) => "IterationLimit",
            Error::NoFeasiblePoint => "NoFeasiblePoint",
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::TruncatedData => "TruncatedData",
            Error::Parse(_) => "Parse",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
