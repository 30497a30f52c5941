use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violated an operation's precondition (non-finite component,
    /// dimension mismatch, out-of-range node index).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration that can never be run (k > d, empty shard, L = 0, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// The iterate or objective became non-finite at this iteration.
    #[error("run diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    /// No admissible (theta_1, theta_2) pair produced a positive contraction
    /// coefficient for the compressed variant.
    #[error("press stepsize infeasible: best beta found was {best_beta}")]
    Infeasible { best_beta: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit status used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Diverged { .. } => 4,
            _ => 2,
        }
    }
}
