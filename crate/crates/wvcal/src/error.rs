use thiserror::Error;

/// Crate-wide error type. `exit_class` groups variants into the CLI exit
/// codes: 1 usage, 2 non-convergence, 3 rank/identifiability/domain,
/// 4 I/O and malformed input files.
#[derive(Error, Debug)]
pub enum Error {
    #[error("{process} parameter must be positive and finite, got {value}")]
    InvalidParam { process: String, value: f64 },

    #[error("model must contain at least one process")]
    EmptyModel,

    #[error("process {0} cannot be simulated (fit-only)")]
    Unsimulatable(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid scale grid: {0}")]
    GridInvalid(String),

    #[error("level {level} needs {needed} samples but the signal has only {have}")]
    GridLevel {
        level: u32,
        needed: usize,
        have: usize,
    },

    #[error("{context}: matrix is not symmetric positive definite")]
    NotSpd { context: String },

    #[error("weighted design is rank deficient; offending columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("singular matrix in {context}; try more scales or a different weight matrix")]
    Singular { context: String },

    #[error("infeasible solution: component {component} of h(theta) is {value} (must be positive)")]
    InfeasibleTheta { component: String, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("confidence intervals require a covariance estimate")]
    MissingCovariance,

    #[error("method {method} needs at least {needed} samples, got {have}")]
    InsufficientLength {
        method: String,
        needed: usize,
        have: usize,
    },

    #[error("unknown unit token {token:?}; supported for this parameter: {}", supported.join(", "))]
    UnknownUnit {
        token: String,
        supported: Vec<String>,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// CLI exit code classes. 0 is success and 2 (non-convergence) is decided
/// from `FitResult::converged`, not from an error variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Usage = 1,
    Identifiability = 3,
    Io = 4,
}

impl Error {
    pub fn exit_class(&self) -> ExitClass {
        match self {
            Error::Usage(_) | Error::UnknownUnit { .. } => ExitClass::Usage,
            Error::Io(_) | Error::Json(_) | Error::Parse { .. } => ExitClass::Io,
            _ => ExitClass::Identifiability,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
