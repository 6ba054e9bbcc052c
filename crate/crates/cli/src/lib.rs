//! Command-line front end: problem files, the solver, the chain benchmark
//! generator and the real-time closed loop.

pub mod commands;
pub mod problem;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] aladin_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT_ERROR: i32 = 1;
    pub const MAX_ITER: i32 = 2;
}
