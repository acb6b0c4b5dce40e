use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("noise covariance is indefinite (eigenvalue {eigenvalue:e}, trace {trace:e})")]
    Indefinite { eigenvalue: f64, trace: f64 },

    #[error("semi-implicit update matrix is singular for mode {mode} (det {det:e}); reduce the step size below {h_max:e}")]
    SingularUpdate { mode: usize, det: f64, h_max: f64 },

    #[error("support [{lo}, {hi}] is not inside (0, {length})")]
    Placement { lo: f64, hi: f64, length: f64 },

    #[error("cannot pack {requested} locations at delta = {delta}; max feasible N = {max_feasible}")]
    Capacity {
        requested: usize,
        delta: f64,
        max_feasible: usize,
    },

    #[error("K_max = {k_max} too small: sine-coefficient tail carries {deficit:e} of the squared kernel norm")]
    KmaxTooSmall { k_max: usize, deficit: f64 },

    #[error("kernel norm diverges: {0}")]
    NormDivergence(String),

    #[error("Fisher information is ill-conditioned (condition {condition:e}); use more locations or a smaller delta")]
    IllConditioned { condition: f64 },

    #[error("asymptotic matrix is singular: {0}")]
    SingularSigma(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("analytic covariance requires a zero initial condition")]
    NonzeroInitialCondition,

    #[error("study cell delta = {delta}: {failed} of {total} replicates failed")]
    TooManyFailures {
        delta: f64,
        failed: usize,
        total: usize,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
