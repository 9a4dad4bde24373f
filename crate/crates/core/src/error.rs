use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("BDF order {k} outside the supported range {min}..={max}")]
    InvalidOrder { k: usize, min: usize, max: usize },

    #[error("division by the zero series")]
    DivisionByZero,

    #[error("series is not a finite polynomial in s (lowest exponent {lowest}, truncated: {truncated})")]
    NotAPolynomial { lowest: i64, truncated: bool },

    #[error("coefficient of s^{exponent} is unknown (series valid below s^{valid_below})")]
    UnknownCoefficient { exponent: i64, valid_below: i64 },

    #[error("fractional order {alpha} outside ({lo}, {hi})")]
    AlphaOutOfRange { alpha: f64, lo: f64, hi: f64 },

    #[error("invalid mesh: need at least 2 subintervals, got {0}")]
    InvalidMesh(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("criterion {criterion} fails for k={k}{}: coefficient of s^{exponent} is {value}, expected 0",
        .ell.map(|l| format!(", ell={l}")).unwrap_or_default())]
    CertificationFailed {
        criterion: String,
        k: usize,
        ell: Option<usize>,
        exponent: i64,
        value: String,
    },

    #[error("time step {tau:.6e} violates the CFL condition (threshold {tau0:.6e})")]
    StabilityRefused { tau: f64, tau0: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
