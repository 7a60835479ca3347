use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch at {location}: {detail}")]
    Dimension { location: String, detail: String },

    #[error("membership grades sum to {sum:e} at premise value {value}; normalization undefined")]
    DegenerateMembership { value: f64, sum: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),

    #[error("SDPA parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("matrix {what} is ill-conditioned (condition number {cond:e})")]
    IllConditioned { what: String, cond: f64 },

    #[error("matrix {0} is not positive definite")]
    NotPositiveDefinite(String),

    #[error("certificate does not match the requested settings: {0}")]
    CertificateMismatch(String),

    #[error("disturbance has zero energy over the horizon")]
    ZeroEnergy,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
