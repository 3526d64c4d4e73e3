//! Experiment runner for path-wise coupling transfer.
//!
//! The numerical work lives in `taco-core`; this crate adds configuration,
//! JSON and CSV artifacts, threading, and the `taco` command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod io;
pub mod parallel;
pub mod pipeline;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("numeric failure{}: {source}", iteration.map(|k| format!(" at iteration {k}")).unwrap_or_default())]
    Numeric {
        iteration: Option<usize>,
        #[source]
        source: taco_core::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("check failed: {0}")]
    Check(String),
}

impl RunError {
    pub fn at(iteration: usize) -> impl Fn(taco_core::Error) -> RunError {
        move |source| RunError::Numeric { iteration: Some(iteration), source }
    }

    /// Process exit code: 2 for configuration and input problems, 3 for
    /// numerical failures, 4 for failed `--check` thresholds.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Format(_) | RunError::Io(_) => 2,
            RunError::Numeric { .. } => 3,
            RunError::Check(_) => 4,
        }
    }
}

impl From<taco_core::Error> for RunError {
    fn from(source: taco_core::Error) -> Self {
        RunError::Numeric { iteration: None, source }
    }
}
