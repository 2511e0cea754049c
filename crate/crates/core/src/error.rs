use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("wavefunction {index} is linearly dependent on the preceding components (residual norm {residual:.3e})")]
    RankDeficient { index: usize, residual: f64 },

    #[error("insufficient grid resolution: {0}")]
    Resolution(String),

    #[error("kernel evaluated at its singularity x = 0")]
    Singularity,

    #[error("weak Lorentz norm diverges in the {regime} regime: {detail}")]
    Divergence { regime: &'static str, detail: String },

    #[error("time step {dt} exceeds the stability budget (peak potential phase {phase:.3} > pi); try dt <= {suggested:.3e}")]
    StepSize { dt: f64, phase: f64, suggested: f64 },

    #[error("parameters outside the supported regime: {0}")]
    Regime(String),

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("checkpoint version mismatch: file has version {found}, reader supports {expected}")]
    CheckpointVersion { found: u16, expected: u16 },

    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }
}
