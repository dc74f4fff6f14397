use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |H - H^dagger| = {max_asymmetry:.3e}")]
    NotHermitian { max_asymmetry: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("time step {dt_us:.6e} us exceeds the stability bound {bound_us:.6e} us")]
    StepTooLarge { dt_us: f64, bound_us: f64 },

    #[error("trace drifted by {drift:.3e} at step {step}")]
    TraceDrift { step: usize, drift: f64 },

    #[error("sample grid is not uniform (spacing deviates by {deviation:.3e} us)")]
    NonUniformGrid { deviation: f64 },

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("no oscillation: signal is constant")]
    NoOscillation,

    #[error("non-positive value in point {index}: ({x}, {y})")]
    NonPositivePoint { index: usize, x: f64, y: f64 },

    #[error("collapse set is not empty; the propagator oracle only covers closed systems")]
    OpenSystem,

    #[error("{}", config_message(*line, msg))]
    Config { line: Option<usize>, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_message(line: Option<usize>, msg: &str) -> String {
    match line {
        Some(l) => format!("config line {l}: {msg}"),
        None => format!("config: {msg}"),
    }
}

impl Error {
    pub(crate) fn config(line: impl Into<Option<usize>>, msg: impl Into<String>) -> Self {
        Error::Config { line: line.into(), msg: msg.into() }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) | Error::StepTooLarge { .. } => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}
