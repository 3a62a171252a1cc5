use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("return mapping did not converge after {iterations} iterations (residual {residual:e} MPa)")]
    Integration { iterations: usize, residual: f64 },

    #[error("loading history is not proportional (sample {index}, angular deviation {deviation:e})")]
    NonProportional { index: usize, deviation: f64 },

    #[error("plastic correction failed: {0}")]
    Correction(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("load amplitude {sigma_a} MPa lies outside the tabulated range [{min}, {max}] MPa")]
    Extrapolation { sigma_a: f64, min: f64, max: f64 },

    #[error("element {id}: {source}")]
    Element {
        id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate calibration: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
