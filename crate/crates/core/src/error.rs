use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pole on imaginary axis at {f_hz} Hz")]
    PoleOnImaginaryAxis { f_hz: f64 },

    #[error("zero magnitude: gain is -inf dB and phase is undefined")]
    ZeroMagnitude,

    #[error("testbed unstable at {f_hz} Hz (max real part {max_real:.3e})")]
    TestbedUnstable { f_hz: f64, max_real: f64 },

    #[error("ill-conditioned experiment (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
