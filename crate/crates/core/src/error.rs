use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (bad bounds, shapes, counts).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input values outside the domain of a function (non-finite state, action on a bound).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration produced non-finite `{field}` at t = {time} s")]
    Integration { field: &'static str, time: f64 },

    #[error("trim failed at power {power}: residual {residual:e}")]
    Trim { power: f64, residual: f64 },

    /// A model rollout left the finite range.
    #[error("diverged: {0}")]
    Diverged(String),

    /// Non-finite loss or gradient during optimisation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for failures of the numerics themselves, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Integration { .. }
                | Error::Trim { .. }
                | Error::Diverged(_)
                | Error::Numeric(_)
        )
    }
}
