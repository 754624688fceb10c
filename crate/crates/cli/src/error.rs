//! Top-level error type mapping every failure to the documented exit
//! codes: 1 for configuration/IO/artifact problems, 2 for assumption
//! violations, 3 for numeric failures inside the solver pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("missing artifact {0} (run `regrowth solve` with the same --out first)")]
    MissingArtifact(PathBuf),

    #[error("assumption check failed:\n  {}", .0.join("\n  "))]
    Assumption(Vec<String>),

    #[error("numeric failure: {}", numeric_message(.0))]
    Numeric(#[from] regrowth::Error),
}

/// Renders a solver error with 1-based regime indices, matching every
/// other user-facing surface of this binary (the library itself counts
/// regimes from 0).
fn numeric_message(e: &regrowth::Error) -> String {
    match e {
        regrowth::Error::BoundaryPolicy { x, regime } => format!(
            "policy at income {x}, regime {} is at the boundary; Euler equation undefined",
            regime + 1
        ),
        regrowth::Error::InfeasiblePolicy { node, regime } => {
            format!("policy infeasible at node {node}, regime {}", regime + 1)
        }
        other => other.to_string(),
    }
}

impl AppError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            AppError::Config(_) | AppError::Io(_) | AppError::MissingArtifact(_) => {
                ExitCode::from(1)
            }
            AppError::Assumption(_) => ExitCode::from(2),
            AppError::Numeric(_) => ExitCode::from(3),
        }
    }
}
