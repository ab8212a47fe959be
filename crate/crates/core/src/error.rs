use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("below localization threshold: lambda_g = {lambda_g:e} cm >= R = {radius:e} cm")]
    BelowThreshold { lambda_g: f64, radius: f64 },

    #[error("radial grid too coarse: dr = {dr:e} cm must be < {limit:e} cm")]
    GridTooCoarse { dr: f64, limit: f64 },

    #[error("grid or time step mismatch between state and propagator")]
    WorkspaceMismatch,

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("quadrature box too small: edge integrand {ratio:e} of its maximum on the {edge} edge")]
    QuadratureTooSmall { edge: &'static str, ratio: f64 },

    #[error("corrupted density matrix slice: {0}")]
    CorruptedSlice(String),

    #[error("significant negative eigenvalue {value:e}")]
    NegativeEigenvalue { value: f64 },

    #[error("fit did not converge after {iterations} iterations (rms residual {rms_residual:e})")]
    FitNotConverged { iterations: usize, rms_residual: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
