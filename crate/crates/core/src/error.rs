use thiserror::Error;

/// Errors raised by the estimator, generators and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("rank {rank} exceeds min(N, T) = {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("degenerate spectrum: relative gap (σ_r - σ_r+1)/σ_1 = {gap:e} at r = {rank}")]
    DegenerateSpectrum { rank: usize, gap: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("non-stationary autoregression: max |root| = {max_root} (bound {bound})")]
    NonStationary { max_root: f64, bound: f64 },

    #[error("invalid block: block size {block_size} for {n} units")]
    InvalidBlock { block_size: usize, n: usize },

    #[error("invalid loading scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("common component is rank deficient: σ_r/σ_1 = {ratio:e}")]
    RankDeficientTruth { ratio: f64 },

    #[error("eigenvalues of Θ are not separated: relative gap {gap:e}")]
    DegenerateTheta { gap: f64 },

    #[error("cross product is singular in Procrustes alignment: σ_min/σ_max = {ratio:e}")]
    DegenerateCrossProduct { ratio: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("Gram matrix is ill-conditioned: condition number {cond:e}")]
    SingularGram { cond: f64 },

    #[error("asymptotic Q matrix is singular")]
    SingularQ,

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("covariance too close to singular for studentization: σ_min = {min_eig:e}")]
    SingularCovariance { min_eig: f64 },

    #[error("too few records: {have} valid, need at least {need}")]
    TooFewRecords { have: usize, need: usize },

    #[error("too few grid points: {have}, need at least {need}")]
    TooFewGridPoints { have: usize, need: usize },

    #[error("too few draws: {have}, need at least {need}")]
    TooFewDraws { have: usize, need: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
