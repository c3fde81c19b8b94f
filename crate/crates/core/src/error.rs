use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (ill-conditioned covariance)")]
    NotPositiveDefinite,

    #[error("{0} did not converge")]
    NonConvergence(String),

    #[error("response contains a single class; both 0 and 1 are required")]
    SingleClass,

    #[error("complete or quasi-complete separation detected (max |theta| = {max_abs_theta:.1})")]
    Separation { max_abs_theta: f64 },

    #[error("model `{0}` did not converge")]
    NotConverged(String),

    #[error("feature names differ between models: {0:?} vs {1:?}")]
    FeatureMismatch(Vec<String>, Vec<String>),

    #[error("reference Brier score is zero; the score ratio is undefined")]
    ZeroBrier,

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("Hosmer-Lemeshow group {group} has mean probability {mean} on the boundary")]
    DegenerateGroup { group: usize, mean: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{0}")]
    Schema(String),

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{failures} of {replicates} replicates failed to fit")]
    TooManyFailures { failures: usize, replicates: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite
                | Error::NonConvergence(_)
                | Error::Separation { .. }
                | Error::NotConverged(_)
                | Error::ZeroBrier
                | Error::ZeroVariance(_)
                | Error::DegenerateGroup { .. }
                | Error::NonFinite(_)
                | Error::TooManyFailures { .. }
        )
    }
}
