use thiserror::Error;

/// Coarse classification used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data, configuration or arguments.
    Input,
    /// A numerical procedure failed (non-convergence, non-finite values).
    Numerical,
    /// A modelling assumption was violated and strict checking was requested.
    Assumption,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Input => 1,
            ErrorKind::Numerical => 2,
            ErrorKind::Assumption => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("row {row}: value {value} does not match price*volume = {expected}")]
    ValueMismatch {
        row: usize,
        value: f64,
        expected: f64,
    },

    #[error("row {row}: time {time} precedes previous time {previous}")]
    DecreasingTime {
        row: usize,
        time: f64,
        previous: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("consumption {consumption} is outside the domain of {family} utility{}",
        trial_price.map(|p| format!(" (trial price {p})")).unwrap_or_default())]
    InadmissibleConsumption {
        consumption: f64,
        family: &'static str,
        trial_price: Option<f64>,
    },

    #[error("solver did not converge after {iterations} iterations (last price {price}, residual {residual})")]
    NonConvergence {
        price: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("objective is not concave on [{lo}, {hi}]")]
    NonConcave { lo: f64, hi: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonConvergence { .. } | Error::NonFinite(_) | Error::NonConcave { .. } => {
                ErrorKind::Numerical
            }
            Error::InadmissibleConsumption { trial_price, .. } if trial_price.is_some() => {
                ErrorKind::Numerical
            }
            Error::AssumptionViolation(_) => ErrorKind::Assumption,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
