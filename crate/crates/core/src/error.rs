use std::fmt;

use crate::ode::TrajectoryRecord;
use crate::trainer::FieldNet;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Evaluation too close to a singular point (t below `t_min`, or at a kernel source).
    #[error("singularity: {0}")]
    Singularity(String),

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("no convergence: {message}")]
    NonConvergence {
        message: String,
        partial: Option<Box<TrajectoryRecord>>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("training diverged at step {step}: {message}")]
    Diverged {
        step: usize,
        message: String,
        checkpoint: Box<FieldNet>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl fmt::Display) -> Self {
        Error::InvalidInput(msg.to_string())
    }

    pub(crate) fn parse(line: usize, msg: impl fmt::Display) -> Self {
        Error::Parse {
            line,
            message: msg.to_string(),
        }
    }
}

pub(crate) fn check_dim(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidInput(format!(
            "{what} has dimension {got}, expected {want}"
        )));
    }
    Ok(())
}
